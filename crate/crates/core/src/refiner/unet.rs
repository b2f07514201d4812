use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::rng::Rng;

/// UNet shape. Channel width at depth `d` is `base_channels · 2^d`; the
/// bottleneck sits at depth `levels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub levels: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
}

impl ArchSpec {
    pub fn new(levels: usize, base_channels: usize, in_channels: usize) -> Self {
        ArchSpec {
            levels,
            base_channels,
            in_channels,
            kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::InvalidParam(format!("invalid arch {self}")));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidParam("kernel must be odd".into()));
        }
        Ok(())
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let div = 1usize << self.levels;
        if h % div != 0 || w % div != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} not divisible by 2^{} = {div}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn width(&self, depth: usize) -> usize {
        self.base_channels << depth
    }

    /// `(cin, cout, k)` of every conv in build order.
    pub fn conv_layout(&self) -> Vec<(usize, usize, usize)> {
        let k = self.kernel;
        let mut v = Vec::new();
        let mut cin = self.in_channels;
        for d in 0..self.levels {
            v.push((cin, self.width(d), k));
            v.push((self.width(d), self.width(d), k));
            cin = self.width(d);
        }
        let bott = self.width(self.levels);
        v.push((cin, bott, k));
        v.push((bott, bott, k));
        for d in (0..self.levels).rev() {
            v.push((self.width(d) + self.width(d + 1), self.width(d), k));
            v.push((self.width(d), self.width(d), k));
        }
        v.push((self.width(0), 1, 1));
        v
    }

    pub fn descriptor(&self) -> String {
        format!(
            "levels={} base={} in={} kernel={}",
            self.levels, self.base_channels, self.in_channels, self.kernel
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut spec = ArchSpec::new(0, 0, 0);
        for kv in s.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad arch token {kv:?}")))?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad arch value {kv:?}")))?;
            match k {
                "levels" => spec.levels = v,
                "base" => spec.base_channels = v,
                "in" => spec.in_channels = v,
                "kernel" => spec.kernel = v,
                _ => return Err(Error::Checkpoint(format!("unknown arch key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w)?;
        let b = tape.param(store, self.b)?;
        tape.conv2d(x, w, b)
    }
}

/// Encoder–decoder with skip concatenation and a sigmoid head.
#[derive(Debug, Clone)]
pub struct UNet {
    spec: ArchSpec,
    convs: Vec<Conv>,
}

impl UNet {
    /// Register parameters under `prefix` in `store` and return the network.
    pub fn build(spec: ArchSpec, store: &mut ParamStore, prefix: &str, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut convs = Vec::new();
        for (i, (cin, cout, k)) in spec.conv_layout().into_iter().enumerate() {
            let (w, b) = store.add_conv(&format!("{prefix}.conv{i:02}"), cout, cin, k, rng)?;
            convs.push(Conv { w, b });
        }
        Ok(UNet { spec, convs })
    }

    /// Rebind to parameters already present in `store` (e.g. after loading).
    pub fn bind(spec: ArchSpec, store: &ParamStore, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let layout = spec.conv_layout();
        let mut convs = Vec::with_capacity(layout.len());
        for (i, (cin, cout, k)) in layout.into_iter().enumerate() {
            let find = |suffix: &str| {
                let name = format!("{prefix}.conv{i:02}.{suffix}");
                store
                    .find(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
            };
            let (w, b) = (find("w")?, find("b")?);
            if store.value(w).shape() != [cout, cin, k, k] || store.value(b).shape() != [1, cout, 1, 1] {
                return Err(Error::Checkpoint(format!("parameter shapes of {prefix}.conv{i:02}")));
            }
            convs.push(Conv { w, b });
        }
        Ok(UNet { spec, convs })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    /// Water probability, N×1×H×W.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let [_, c, h, w] = tape.value(x).shape();
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        self.spec.check_input(h, w)?;
        let mut layers = self.convs.iter();
        let mut conv_relu = |tape: &mut Tape, x: Var| -> Result<Var> {
            let y = layers.next().expect("layout").apply(tape, store, x)?;
            tape.relu(y)
        };
        let mut skips = Vec::with_capacity(self.spec.levels);
        let mut cur = x;
        for _ in 0..self.spec.levels {
            cur = conv_relu(tape, cur)?;
            cur = conv_relu(tape, cur)?;
            skips.push(cur);
            cur = tape.maxpool2(cur)?;
        }
        cur = conv_relu(tape, cur)?;
        cur = conv_relu(tape, cur)?;
        for skip in skips.into_iter().rev() {
            let up = tape.upsample2(cur)?;
            cur = tape.concat(skip, up)?;
            cur = conv_relu(tape, cur)?;
            cur = conv_relu(tape, cur)?;
        }
        let head = *self.convs.last().expect("head");
        let logits = head.apply(tape, store, cur)?;
        tape.sigmoid(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use crate::rng;

    /// Independent count: walk the architecture description by hand.
    fn count_oracle(levels: usize, base: usize, cin: usize, k: usize) -> usize {
        let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
        let mut total = 0;
        let mut c = cin;
        for d in 0..levels {
            let wd = base << d;
            total += conv(c, wd, k) + conv(wd, wd, k);
            c = wd;
        }
        let b = base << levels;
        total += conv(c, b, k) + conv(b, b, k);
        let mut below = b;
        for d in (0..levels).rev() {
            let wd = base << d;
            total += conv(wd + below, wd, k) + conv(wd, wd, k);
            below = wd;
        }
        total + conv(base, 1, 1)
    }

    #[test]
    fn parameter_count() {
        let mut store = ParamStore::new();
        let spec = ArchSpec::new(2, 8, 4);
        UNet::build(spec, &mut store, "s1", &mut rng::stream(1, "init")).unwrap();
        assert_eq!(store.num_scalars(), count_oracle(2, 8, 4, 3));
        assert_eq!(store.num_scalars(), 29_833);
    }

    #[test]
    fn output_shape_and_range() {
        let mut store = ParamStore::new();
        let net = UNet::build(ArchSpec::new(2, 8, 4), &mut store, "s1", &mut rng::stream(2, "init")).unwrap();
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..4 * 64 * 64).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let x = tape.leaf(Tensor::new([1, 4, 64, 64], data).unwrap()).unwrap();
        let y = net.forward(&mut tape, &store, x).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), [1, 1, 64, 64]);
        assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn indivisible_input_rejected() {
        let mut store = ParamStore::new();
        let net = UNet::build(ArchSpec::new(2, 4, 1), &mut store, "s", &mut rng::stream(0, "i")).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 1, 10, 12])).unwrap();
        assert!(net.forward(&mut tape, &store, x).is_err());
    }

    #[test]
    fn arch_descriptor_roundtrip() {
        let s = ArchSpec::new(3, 6, 5);
        assert_eq!(ArchSpec::parse(&s.descriptor()).unwrap(), s);
        assert!(ArchSpec::parse("levels=0 base=1 in=1 kernel=3").is_err());
    }
}

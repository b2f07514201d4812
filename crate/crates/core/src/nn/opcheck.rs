//! Finite-difference checks of each differentiable operator.

use rand::Rng as _;

use super::gradcheck::{grad_check, GradCheckConfig, GradCheckReport, Segment};
use super::ops::bce_loss;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

pub const OPS: [&str; 7] = ["conv2d", "relu", "sigmoid", "maxpool2", "upsample2", "concat", "bce"];

fn uniform(shape: [usize; 4], lo: f64, hi: f64, r: &mut rng::Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| lo + (hi - lo) * r.random::<f64>()).collect()).expect("shape")
}

/// Values bounded away from zero so ReLU kinks are not straddled.
fn away_from_zero(t: &mut Tensor) {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
}

/// Pairwise distinct values, so pooling has no argmax ties.
fn distinct(shape: [usize; 4], r: &mut rng::Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    rand::seq::SliceRandom::shuffle(vals.as_mut_slice(), r);
    Tensor::new(shape, vals).expect("shape")
}

/// `L = Σ r ⊙ op(inputs)`, with input gradients from the tape. `corrupt`
/// scales every conv-derived gradient (1.0 for an honest check).
fn linear_probe(
    inputs: Vec<(&str, Tensor)>,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
    seed: u64,
    corrupt: f64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let shapes: Vec<[usize; 4]> = inputs.iter().map(|(_, t)| t.shape()).collect();
    let segments: Vec<Segment> = inputs.iter().map(|(n, t)| Segment::new(*n, t.len())).collect();
    let x0: Vec<f64> = inputs.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    let mut weights: Option<Tensor> = None;
    let mut r = rng::stream(seed, "opcheck-weights");
    grad_check(
        &x0,
        &segments,
        |flat| {
            let mut tape = Tape::new();
            let mut vars = Vec::new();
            let mut off = 0;
            for s in &shapes {
                let n: usize = s.iter().product();
                vars.push(tape.leaf(Tensor::new(*s, flat[off..off + n].to_vec())?)?);
                off += n;
            }
            let y = build(&mut tape, &vars)?;
            let shape = tape.value(y).shape();
            let w = weights.get_or_insert_with(|| uniform(shape, -1.0, 1.0, &mut r)).clone();
            let loss: f64 = tape.value(y).data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
            let grads = tape.backward(vec![(y, w)])?;
            let mut g = Vec::with_capacity(flat.len());
            for (v, s) in vars.iter().zip(&shapes) {
                match grads.get(*v) {
                    Some(t) => g.extend(t.data().iter().map(|x| x * corrupt)),
                    None => g.extend(std::iter::repeat_n(0.0, s.iter().product())),
                }
            }
            Ok((loss, g))
        },
        cfg,
    )
}

/// Check one operator by name; `corrupt` scales the conv backward.
pub fn check_op(op: &str, cfg: &GradCheckConfig, corrupt: f64) -> Result<GradCheckReport> {
    let mut r = rng::stream(cfg.seed, op);
    let honest = 1.0;
    match op {
        "conv2d" => linear_probe(
            vec![
                ("x", uniform([2, 3, 6, 6], -1.0, 1.0, &mut r)),
                ("w", uniform([4, 3, 3, 3], -0.5, 0.5, &mut r)),
                ("b", uniform([1, 4, 1, 1], -0.5, 0.5, &mut r)),
            ],
            |t, v| t.conv2d(v[0], v[1], v[2]),
            cfg.seed,
            corrupt,
            cfg,
        ),
        "relu" => {
            let mut x = uniform([2, 3, 6, 6], -1.0, 1.0, &mut r);
            away_from_zero(&mut x);
            linear_probe(vec![("x", x)], |t, v| t.relu(v[0]), cfg.seed, honest, cfg)
        }
        "sigmoid" => linear_probe(
            vec![("x", uniform([2, 3, 6, 6], -4.0, 4.0, &mut r))],
            |t, v| t.sigmoid(v[0]),
            cfg.seed,
            honest,
            cfg,
        ),
        "maxpool2" => linear_probe(
            vec![("x", distinct([2, 3, 6, 6], &mut r))],
            |t, v| t.maxpool2(v[0]),
            cfg.seed,
            honest,
            cfg,
        ),
        "upsample2" => linear_probe(
            vec![("x", uniform([2, 3, 4, 4], -1.0, 1.0, &mut r))],
            |t, v| t.upsample2(v[0]),
            cfg.seed,
            honest,
            cfg,
        ),
        "concat" => linear_probe(
            vec![
                ("a", uniform([1, 3, 8, 8], -1.0, 1.0, &mut r)),
                ("b", uniform([1, 2, 8, 8], -1.0, 1.0, &mut r)),
            ],
            |t, v| t.concat(v[0], v[1]),
            cfg.seed,
            honest,
            cfg,
        ),
        "bce" => {
            let pred = uniform([2, 1, 6, 6], 0.05, 0.95, &mut r);
            let target = Tensor::new(
                [2, 1, 6, 6],
                (0..72).map(|_| f64::from(r.random::<bool>())).collect(),
            )?;
            grad_check(
                pred.data(),
                &[Segment::new("pred", pred.len())],
                |flat| {
                    let p = Tensor::new(pred.shape(), flat.to_vec())?;
                    let (l, g) = bce_loss(&p, &target, 1.7)?;
                    Ok((l, g.into_data()))
                },
                cfg,
            )
        }
        _ => Err(Error::InvalidParam(format!("unknown operator {op:?}"))),
    }
}

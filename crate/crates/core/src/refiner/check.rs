//! Finite-difference check of a whole two-stage network.

use rand::Rng as _;

use super::model::{stage2_channels, Model};
use super::unet::ArchSpec;
use crate::error::Result;
use crate::nn::{bce_loss, grad_check, GradCheckConfig, GradCheckReport, ParamStore, Segment, Tape, Tensor};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct NetCheckSpec {
    pub levels: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub size: usize,
    pub use_points: bool,
}

impl Default for NetCheckSpec {
    fn default() -> Self {
        NetCheckSpec {
            levels: 2,
            base_channels: 4,
            in_channels: 4,
            size: 8,
            use_points: true,
        }
    }
}

fn segments(store: &ParamStore) -> Vec<Segment> {
    store.iter().map(|p| Segment::new(p.name.clone(), p.value.len())).collect()
}

/// Objective: BCE of both stage outputs against a random mask, over every
/// parameter of both stages and the imagery input. `corrupt` scales the
/// analytic gradient of every conv weight.
pub fn check_refiner(spec: &NetCheckSpec, cfg: &GradCheckConfig, corrupt: f64) -> Result<GradCheckReport> {
    let s1 = ArchSpec::new(spec.levels, spec.base_channels, spec.in_channels);
    let s2 = ArchSpec::new(
        spec.levels,
        spec.base_channels,
        stage2_channels(spec.in_channels, spec.use_points),
    );
    let mut model = Model::refiner(s1, s2, spec.use_points, cfg.seed)?;
    // Non-zero biases so no unit sits exactly on a ReLU kink.
    let mut r = rng::stream(cfg.seed, "netcheck");
    for store in [&mut model.stage1.params, &mut model.stage2.as_mut().expect("refiner").params] {
        for p in store.iter_mut().filter(|p| p.name.ends_with(".b")) {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.1 * (r.random::<f64>() - 0.5));
        }
    }
    let hw = spec.size * spec.size;
    let x = Tensor::new(
        [1, spec.in_channels, spec.size, spec.size],
        (0..spec.in_channels * hw).map(|_| r.random::<f64>()).collect(),
    )?;
    let target = Tensor::new([1, 1, spec.size, spec.size], (0..hw).map(|_| f64::from(r.random::<bool>())).collect())?;
    let points = spec.use_points.then(|| {
        Tensor::new([1, 1, spec.size, spec.size], (0..hw).map(|_| f64::from(r.random::<f64>() < 0.1)).collect())
            .expect("shape")
    });

    let mut segs = segments(&model.stage1.params);
    segs.extend(segments(&model.stage2.as_ref().expect("refiner").params));
    segs.push(Segment::new("input", x.len()));
    let n1 = model.stage1.params.num_scalars();
    let n2 = model.stage2.as_ref().expect("refiner").params.num_scalars();
    let mut x0 = model.stage1.params.flatten();
    x0.extend(model.stage2.as_ref().expect("refiner").params.flatten());
    x0.extend_from_slice(x.data());
    let weight_mask: Vec<bool> = segs
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.name.ends_with(".w"), s.len))
        .collect();

    grad_check(
        &x0,
        &segs,
        |flat| {
            let (p1, rest) = flat.split_at(n1);
            let (p2, input) = rest.split_at(n2);
            model.stage1.params.load_flat(p1)?;
            let s2 = model.stage2.as_mut().expect("refiner");
            s2.params.load_flat(p2)?;
            let mut tape = Tape::new();
            let xv = tape.leaf(Tensor::new(x.shape(), input.to_vec())?)?;
            let y1 = model.stage1.net.forward(&mut tape, &model.stage1.params, xv)?;
            let mut fused = tape.concat(xv, y1)?;
            if let Some(p) = &points {
                let pv = tape.leaf(p.clone())?;
                fused = tape.concat(fused, pv)?;
            }
            let y2 = s2.net.forward(&mut tape, &s2.params, fused)?;
            let (l1, g1) = bce_loss(tape.value(y1), &target, 1.0)?;
            let (l2, g2) = bce_loss(tape.value(y2), &target, 1.0)?;
            let grads = tape.backward(vec![(y1, g1), (y2, g2)])?;
            model.stage1.params.zero_grads();
            s2.params.zero_grads();
            tape.accumulate_params(&grads, &mut model.stage1.params)?;
            tape.accumulate_params(&grads, &mut s2.params)?;
            let mut g = model.stage1.params.flatten_grads();
            g.extend(s2.params.flatten_grads());
            match grads.get(xv) {
                Some(t) => g.extend_from_slice(t.data()),
                None => g.extend(std::iter::repeat_n(0.0, x.len())),
            }
            for (v, &is_w) in g.iter_mut().zip(&weight_mask) {
                if is_w {
                    *v *= corrupt;
                }
            }
            Ok((l1 + l2, g))
        },
        cfg,
    )
}

use floodrefine::nn::{bce_loss, optim_step, OptimKind, OptimState, ParamStore, Tape, Tensor};
use floodrefine::refiner::{ArchSpec, Stage};
use floodrefine::rng;
use rand::Rng;

/// Imagery whose first band is the target, so the task is learnable.
fn toy_batch(seed: u64) -> (Tensor, Tensor) {
    let mut r = rng::stream(seed, "toy");
    let (n, c, h, w) = (4, 2, 16, 16);
    let mut target = vec![0.0; n * h * w];
    let mut x = vec![0.0; n * c * h * w];
    for s in 0..n {
        let cx = r.random_range(4.0..12.0);
        let cy = r.random_range(4.0..12.0);
        for i in 0..h {
            for j in 0..w {
                let water = ((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)).sqrt() < 4.0;
                target[s * h * w + i * w + j] = f64::from(water);
                x[(s * c) * h * w + i * w + j] = if water { 0.2 } else { 0.8 } + 0.05 * r.random::<f64>();
                x[(s * c + 1) * h * w + i * w + j] = r.random::<f64>();
            }
        }
    }
    (
        Tensor::new([n, c, h, w], x).unwrap(),
        Tensor::new([n, 1, h, w], target).unwrap(),
    )
}

fn train_steps(steps: usize, lr: f64, seed: u64) -> (Stage, Vec<f64>) {
    let mut stage = Stage::init(ArchSpec::new(2, 4, 2), "net", seed).unwrap();
    let mut opt = OptimState::new(OptimKind::adam(), lr).unwrap();
    let (x, t) = toy_batch(seed);
    let mut losses = Vec::new();
    for _ in 0..steps {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone()).unwrap();
        let y = stage.net.forward(&mut tape, &stage.params, xv).unwrap();
        let (loss, g) = bce_loss(tape.value(y), &t, 1.0).unwrap();
        let grads = tape.backward(vec![(y, g)]).unwrap();
        tape.accumulate_params(&grads, &mut stage.params).unwrap();
        optim_step(&mut stage.params, &mut opt).unwrap();
        losses.push(loss);
    }
    (stage, losses)
}

#[test]
fn ten_adam_steps_reduce_loss() {
    let (_, losses) = train_steps(10, 1e-3, 3);
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn hundred_steps_are_deterministic() {
    let (a, la) = train_steps(100, 1e-3, 11);
    let (b, lb) = train_steps(100, 1e-3, 11);
    assert!(a.params.bits_eq(&b.params));
    assert_eq!(
        la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let (c, _) = train_steps(100, 1e-3, 12);
    assert!(!a.params.bits_eq(&c.params));
}

#[test]
fn other_stores_params_are_not_accumulated() {
    let mut a = ParamStore::new();
    let mut b = ParamStore::new();
    let ia = a.add("a", Tensor::full([1, 1, 1, 2], 1.0)).unwrap();
    let ib = b.add("b", Tensor::full([1, 1, 1, 3], 2.0)).unwrap();
    assert!(a.owns(ia) && !a.owns(ib));

    let mut tape = Tape::new();
    let va = tape.param(&a, ia).unwrap();
    let vb = tape.param(&b, ib).unwrap();
    let grads = tape
        .backward(vec![(va, Tensor::full([1, 1, 1, 2], 0.5)), (vb, Tensor::full([1, 1, 1, 3], 0.25))])
        .unwrap();
    tape.accumulate_params(&grads, &mut a).unwrap();
    tape.accumulate_params(&grads, &mut b).unwrap();
    assert_eq!(a.grad(ia).unwrap().data(), &[0.5, 0.5]);
    assert_eq!(b.grad(ib).unwrap().data(), &[0.25, 0.25, 0.25]);
}

#[test]
fn clone_keeps_ownership() {
    let mut a = ParamStore::new();
    let id = a.add("w", Tensor::zeros([1, 1, 1, 1])).unwrap();
    let b = a.clone();
    assert!(b.owns(id));
    assert!(!ParamStore::new().owns(id));
}

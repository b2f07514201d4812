use std::path::Path;

use floodrefine::eval::{
    confusion, export_panels, mean_iou, parse_summary, pixel_accuracy, render_summary, run_ablation, run_benchmark,
    evaluate, evaluate_samples, Confusion, Runner, PANEL_NAMES,
};
use floodrefine::manifest::{Manifest, Split};
use floodrefine::raster::BinaryMask;
use floodrefine::refiner::{ArchSpec, Checkpoint, Model, TrainConfig};
use floodrefine::synth::{gen_dataset, DatasetSpec, SceneParams};
use proptest::prelude::*;

/// Per-pixel enumeration, written independently of the library.
fn brute(pred: &[u8], truth: &[u8]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.0 += 1,
            (1, 0) => c.1 += 1,
            (0, 0) => c.2 += 1,
            _ => c.3 += 1,
        }
    }
    c
}

fn brute_scores(c: (u64, u64, u64, u64)) -> (f64, f64) {
    let (tp, fp, tn, fn_) = c;
    let acc = 100.0 * (tp + tn) as f64 / (tp + fp + tn + fn_) as f64;
    let mut ious = Vec::new();
    for (i, u) in [(tp, tp + fp + fn_), (tn, tn + fn_ + fp)] {
        if u > 0 {
            ious.push(100.0 * i as f64 / u as f64);
        }
    }
    let miou = if ious.is_empty() { 100.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 };
    (acc, miou)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn metrics_match_enumeration(pred in prop::collection::vec(0u8..2, 64), truth in prop::collection::vec(0u8..2, 64)) {
        let p = BinaryMask::new(8, 8, pred.clone()).unwrap();
        let t = BinaryMask::new(8, 8, truth.clone()).unwrap();
        let c = confusion(&p, &t).unwrap();
        let b = brute(&pred, &truth);
        prop_assert_eq!((c.tp, c.fp, c.tn, c.fn_), b);
        let (acc, miou) = brute_scores(b);
        prop_assert_eq!(pixel_accuracy(&c).unwrap().to_bits(), acc.to_bits());
        prop_assert_eq!(mean_iou(&c).unwrap().to_bits(), miou.to_bits());
    }
}

#[test]
fn accumulation_order_does_not_matter() {
    let masks: Vec<(BinaryMask, BinaryMask)> = (0..20u64)
        .map(|k| {
            let p = BinaryMask::from_fn(8, 8, |x, y| (x * 3 + y * 5 + k as usize) % 7 < 3);
            let t = BinaryMask::from_fn(8, 8, |x, y| (x + 2 * y + k as usize) % 5 < 2);
            (p, t)
        })
        .collect();
    let fwd: Confusion = masks.iter().map(|(p, t)| confusion(p, t).unwrap()).sum();
    let rev: Confusion = masks.iter().rev().map(|(p, t)| confusion(p, t).unwrap()).sum();
    assert_eq!(fwd, rev);
    assert_eq!(fwd.total(), 20 * 64);
}

fn dataset(dir: &Path, tiles: usize, test: usize) -> Manifest {
    let spec = DatasetSpec {
        n_tiles: tiles,
        test_tiles: test,
        scene: SceneParams {
            width: 32,
            height: 32,
            seed: 21,
            ..SceneParams::default()
        },
        ..DatasetSpec::benchmark(21)
    };
    gen_dataset(&spec, dir, 1).unwrap().0
}

#[test]
fn constant_half_model_predicts_all_water() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 6, 3);
    let mut model = Model::unet(ArchSpec::new(2, 4, 4), 1).unwrap();
    for p in model.stage1.params.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let ckpt = Checkpoint {
        model,
        config: TrainConfig::default(),
        history: Vec::new(),
        steps: 0,
    };
    let samples = m.load_split(Split::Test, &[]).unwrap();
    let water: u64 = samples.iter().map(|s| s.fine.water_count() as u64).sum();
    let total = (samples.len() * 32 * 32) as u64;
    let rep = evaluate_samples(&ckpt, &samples, None, 0.5).unwrap();
    assert_eq!(
        rep.confusion,
        Confusion {
            tp: water,
            fp: total - water,
            tn: 0,
            fn_: 0
        }
    );
    let frac = 100.0 * water as f64 / total as f64;
    assert!((rep.accuracy - frac).abs() < 1e-9);
    assert!((rep.miou - frac / 2.0).abs() < 1e-9);
    assert_eq!(rep.iou_land, Some(0.0));

    let again = evaluate(&ckpt, &m, Split::Test, None).unwrap();
    assert_eq!(again.render(), rep.render());
}

fn template() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 4,
        base_channels: 4,
        val_tiles: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn benchmark_is_reproducible_and_consistent_with_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 10, 3);
    let a = run_benchmark(&m, &[7], &template(), "tdc-low", 1).unwrap();
    let b = run_benchmark(&m, &[7], &template(), "tdc-low", 1).unwrap();
    assert_eq!(a.rows.len(), 5);
    assert_eq!(render_summary(&a), render_summary(&b));

    let ab = run_ablation(&m, &[7], &template(), 2).unwrap();
    assert_eq!(ab.rows.len(), 5);
    let no_points = &ab.rows[0].per_seed[0].1;
    let refiner = &a.row("Refiner / Coarse").unwrap().per_seed[0].1;
    assert_eq!(no_points.render(), refiner.render());
    let high_low = &ab.row("High / Low").unwrap().per_seed[0].1;
    let bench_points = &a.row("Refiner / Coarse+Points").unwrap().per_seed[0].1;
    assert_eq!(high_low.render(), bench_points.render());

    assert_eq!(a.row("Refiner / Coarse+Points").unwrap().paper.acc, 97.2);
    assert_eq!(a.row("Refiner / Coarse+Points").unwrap().paper.miou, 61.8);
    assert_eq!(ab.row("Low / High").unwrap().paper.acc, 96.9);
    assert_eq!(ab.row("Low / High").unwrap().paper.miou, 61.0);

    let parsed = parse_summary(&render_summary(&ab)).unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(render_summary(&parsed[0]), render_summary(&ab));
}

#[test]
fn five_panels_per_tile() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 10, 3);
    let tags = vec!["tdc-low".to_string()];
    let mut runner = Runner::new(&m, &tags, template(), 1).unwrap();
    let t = runner.benchmark(&[3], "tdc-low").unwrap();
    let ck = |i: usize| runner.checkpoint(&t.rows[i].cell, 3).unwrap();
    let samples = &runner.test_samples()[..2];
    let out = dir.path().join("panels");
    let n = export_panels(samples, ck(0), ck(1), ck(2), "tdc-low", &out).unwrap();
    assert_eq!(n, 2 * PANEL_NAMES.len());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 10);
    let bytes = std::fs::read(out.join("test-00000_refiner_points.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
}

use std::fmt;

use rand::seq::SliceRandom;

use super::model::{fuse, mask_tensor, stack, stage2_channels, tile_tensor, Model, ModelKind, Stage};
use super::unet::ArchSpec;
use crate::error::{Error, Result};
use crate::eval::{confusion, mean_iou, pixel_accuracy, Confusion};
use crate::manifest::{Manifest, Split, TileSample};
use crate::nn::{bce_loss, optim_step, OptimKind, OptimState, Tape, Tensor};
use crate::raster::{BinaryMask, ProbabilityMask};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    Coarse,
    Fine,
}

impl LabelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::Coarse => "coarse",
            LabelKind::Fine => "fine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(LabelKind::Coarse),
            "fine" => Ok(LabelKind::Fine),
            _ => Err(Error::Config(format!("unknown label kind {s:?}"))),
        }
    }

    pub fn pick<'a>(&self, s: &'a TileSample) -> &'a BinaryMask {
        match self {
            LabelKind::Coarse => &s.coarse,
            LabelKind::Fine => &s.fine,
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSchedule {
    /// Stage 1 trained, frozen, then stage 2 trained on its outputs.
    Sequential,
    /// Both stages trained together on the summed losses.
    Joint,
}

impl StageSchedule {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageSchedule::Sequential => "sequential",
            StageSchedule::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(StageSchedule::Sequential),
            "joint" => Ok(StageSchedule::Joint),
            _ => Err(Error::Config(format!("unknown stage schedule {s:?}"))),
        }
    }
}

/// Learning rate over the optimizer steps of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate towards zero at the stage's last step.
    Cosine,
}

impl LrSchedule {
    pub fn as_str(&self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => Err(Error::Config(format!("unknown learning rate schedule {s:?}"))),
        }
    }

    /// Rate for 0-based `step` out of `total`.
    pub fn rate(&self, base: f64, step: u64, total: u64) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub label_kind: LabelKind,
    /// Point raster tag from the manifest; `None` trains without points.
    pub points: Option<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub optimizer: OptimKind,
    pub seed: u64,
    pub schedule: StageSchedule,
    pub weight_pos: f64,
    pub levels: usize,
    pub base_channels: usize,
    /// Test tiles used for per-epoch monitoring.
    pub val_tiles: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            label_kind: LabelKind::Coarse,
            points: None,
            epochs: 15,
            batch_size: 8,
            learning_rate: 2e-3,
            lr_schedule: LrSchedule::Cosine,
            optimizer: OptimKind::adam(),
            seed: 42,
            schedule: StageSchedule::Sequential,
            weight_pos: 1.0,
            levels: 2,
            base_channels: 8,
            val_tiles: 16,
        }
    }
}

impl TrainConfig {
    pub fn use_points(&self) -> bool {
        self.points.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(self.weight_pos > 0.0 && self.weight_pos.is_finite()) {
            return Err(Error::InvalidParam("weight_pos must be > 0".into()));
        }
        if self.levels == 0 || self.base_channels == 0 {
            return Err(Error::InvalidParam("levels and base_channels must be >= 1".into()));
        }
        OptimState::new(self.optimizer, self.learning_rate)?;
        Ok(())
    }

    /// Ordered `key value` pairs; inverse of [`TrainConfig::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("label_kind", self.label_kind.as_str().to_string()),
            ("points", self.points.clone().unwrap_or_else(|| "none".into())),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("lr_schedule", self.lr_schedule.as_str().to_string()),
            ("optimizer", self.optimizer.name().to_string()),
        ];
        match self.optimizer {
            OptimKind::SgdMomentum { momentum } => v.push(("momentum", format!("{momentum:?}"))),
            OptimKind::Adam { beta1, beta2, epsilon } => {
                v.push(("beta1", format!("{beta1:?}")));
                v.push(("beta2", format!("{beta2:?}")));
                v.push(("epsilon", format!("{epsilon:?}")));
            }
        }
        v.extend([
            ("seed", self.seed.to_string()),
            ("schedule", self.schedule.as_str().to_string()),
            ("weight_pos", format!("{:?}", self.weight_pos)),
            ("levels", self.levels.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("val_tiles", self.val_tiles.to_string()),
        ]);
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))
        }
        let mut cfg = TrainConfig::default();
        let (mut opt, mut momentum) = (cfg.optimizer.name().to_string(), 0.9);
        let (mut b1, mut b2, mut eps) = (0.9, 0.999, 1e-8);
        for (k, v) in pairs {
            match k {
                "label_kind" => cfg.label_kind = LabelKind::parse(v)?,
                "points" => cfg.points = (v != "none" && !v.is_empty()).then(|| v.to_string()),
                "epochs" => cfg.epochs = num(k, v)?,
                "batch_size" => cfg.batch_size = num(k, v)?,
                "learning_rate" => cfg.learning_rate = num(k, v)?,
                "lr_schedule" => cfg.lr_schedule = LrSchedule::parse(v)?,
                "optimizer" => opt = v.to_string(),
                "momentum" => momentum = num(k, v)?,
                "beta1" => b1 = num(k, v)?,
                "beta2" => b2 = num(k, v)?,
                "epsilon" => eps = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                "schedule" => cfg.schedule = StageSchedule::parse(v)?,
                "weight_pos" => cfg.weight_pos = num(k, v)?,
                "levels" => cfg.levels = num(k, v)?,
                "base_channels" => cfg.base_channels = num(k, v)?,
                "val_tiles" => cfg.val_tiles = num(k, v)?,
                _ => return Err(Error::Config(format!("unknown training key {k:?}"))),
            }
        }
        cfg.optimizer = match opt.as_str() {
            "adam" => OptimKind::Adam {
                beta1: b1,
                beta2: b2,
                epsilon: eps,
            },
            "sgd" => OptimKind::SgdMomentum { momentum },
            _ => return Err(Error::Config(format!("unknown optimizer {opt:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub stage: u8,
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub val_miou: f64,
}

impl EpochMetrics {
    pub fn render(&self) -> String {
        format!(
            "{} {} {:?} {:?} {:?}",
            self.stage, self.epoch, self.loss, self.val_acc, self.val_miou
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let f: Vec<&str> = s.split_whitespace().collect();
        let bad = || Error::Checkpoint(format!("bad metrics line {s:?}"));
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(EpochMetrics {
            stage: f[0].parse().map_err(|_| bad())?,
            epoch: f[1].parse().map_err(|_| bad())?,
            loss: f[2].parse().map_err(|_| bad())?,
            val_acc: f[3].parse().map_err(|_| bad())?,
            val_miou: f[4].parse().map_err(|_| bad())?,
        })
    }
}

pub fn metrics_log(history: &[EpochMetrics]) -> String {
    let mut out = String::from("# stage epoch loss val_acc val_miou\n");
    for m in history {
        out.push_str(&m.render());
        out.push('\n');
    }
    out
}

/// Tiles converted to tensors once, ready for batching.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub ids: Vec<String>,
    pub imagery: Vec<Tensor>,
    pub labels: Vec<Tensor>,
    pub points: Option<Vec<Tensor>>,
    pub fine: Vec<BinaryMask>,
}

impl TrainSet {
    pub fn from_samples(samples: &[TileSample], label_kind: LabelKind, points: Option<&str>) -> Result<Self> {
        let pts = match points {
            None => None,
            Some(tag) => Some(
                samples
                    .iter()
                    .map(|s| {
                        s.points(tag).map(mask_tensor).ok_or_else(|| {
                            Error::Manifest(format!("tile {} has no point raster {tag:?}", s.tile_id))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(TrainSet {
            ids: samples.iter().map(|s| s.tile_id.clone()).collect(),
            imagery: samples.iter().map(|s| tile_tensor(&s.imagery)).collect(),
            labels: samples.iter().map(|s| mask_tensor(label_kind.pick(s))).collect(),
            points: pts,
            fine: samples.iter().map(|s| s.fine.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.imagery.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imagery.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.ids.truncate(n);
        self.imagery.truncate(n);
        self.labels.truncate(n);
        if let Some(p) = &mut self.points {
            p.truncate(n);
        }
        self.fine.truncate(n);
    }

    fn channels(&self) -> Result<usize> {
        self.imagery
            .first()
            .map(|t| t.c())
            .ok_or_else(|| Error::InvalidParam("no training tiles".into()))
    }
}

/// Trained model plus the configuration and metrics that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub history: Vec<EpochMetrics>,
    /// Optimizer steps taken over all stages.
    pub steps: u64,
}

fn steps_for(n: usize, cfg: &TrainConfig, stages: usize) -> u64 {
    (stages * cfg.epochs * n.div_ceil(cfg.batch_size)) as u64
}

fn stage_seed(seed: u64, stage: u8) -> u64 {
    rng::derive(seed, if stage == 1 { "stage1" } else { "stage2" })
}

fn arch_for(cfg: &TrainConfig, in_channels: usize) -> ArchSpec {
    ArchSpec::new(cfg.levels, cfg.base_channels, in_channels)
}

/// Predict a list of single-sample inputs in batches.
fn predict_all(stage: &Stage, inputs: &[Tensor], batch: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch.max(1)) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let y = stage.predict(&stack(&refs)?)?;
        for s in 0..chunk.len() {
            let [_, c, h, w] = y.shape();
            out.push(Tensor::new([1, c, h, w], y.sample(s).to_vec())?);
        }
    }
    Ok(out)
}

fn fine_confusion(probs: &[Tensor], fine: &[BinaryMask]) -> Result<Confusion> {
    probs
        .iter()
        .zip(fine)
        .map(|(p, t)| {
            let pm = ProbabilityMask::new(t.width(), t.height(), p.data().to_vec())?;
            confusion(&pm.threshold(0.5), t)
        })
        .sum()
}

fn validation(probs: &[Tensor], fine: &[BinaryMask]) -> Result<(f64, f64)> {
    if probs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let c = fine_confusion(probs, fine)?;
    Ok((pixel_accuracy(&c)?, mean_iou(&c)?))
}

fn batches(n: usize, cfg: &TrainConfig, rng: &mut rng::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect()
}

fn gather(items: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let refs: Vec<&Tensor> = idx.iter().map(|&i| &items[i]).collect();
    stack(&refs)
}

/// Fit one stage on precomputed inputs.
fn fit_stage(
    stage: &mut Stage,
    stage_no: u8,
    inputs: &[Tensor],
    labels: &[Tensor],
    val: (&[Tensor], &[BinaryMask]),
    cfg: &TrainConfig,
    history: &mut Vec<EpochMetrics>,
) -> Result<()> {
    let mut opt = OptimState::new(cfg.optimizer, cfg.learning_rate)?;
    let mut shuffle = rng::stream(stage_seed(cfg.seed, stage_no), "shuffle");
    let steps = steps_for(inputs.len(), cfg, 1);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in batches(inputs.len(), cfg, &mut shuffle) {
            opt.learning_rate = cfg.lr_schedule.rate(cfg.learning_rate, opt.step_count, steps);
            let x = gather(inputs, &idx)?;
            let t = gather(labels, &idx)?;
            let mut tape = Tape::new();
            let xv = tape.constant(x)?;
            let y = stage.net.forward(&mut tape, &stage.params, xv)?;
            let (loss, g) = bce_loss(tape.value(y), &t, cfg.weight_pos).map_err(|e| nonfinite(e, stage_no, epoch))?;
            let grads = tape.backward(vec![(y, g)])?;
            tape.accumulate_params(&grads, &mut stage.params)?;
            optim_step(&mut stage.params, &mut opt)?;
            total += loss * idx.len() as f64;
        }
        let probs = predict_all(stage, val.0, cfg.batch_size)?;
        let (val_acc, val_miou) = validation(&probs, val.1)?;
        history.push(EpochMetrics {
            stage: stage_no,
            epoch,
            loss: total / inputs.len() as f64,
            val_acc,
            val_miou,
        });
    }
    Ok(())
}

fn nonfinite(e: Error, stage: u8, epoch: usize) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{m} (stage {stage}, epoch {epoch})")),
        other => other,
    }
}

/// Train stage 1 alone: imagery → label mask. Identical for a UNet and a
/// refiner with the same label kind and seed, so callers may share it.
pub fn train_stage1(train: &TrainSet, val: &TrainSet, cfg: &TrainConfig) -> Result<(Stage, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let spec = arch_for(cfg, train.channels()?);
    let mut stage = Stage::init(spec, super::model::STAGE1_PREFIX, stage_seed(cfg.seed, 1))?;
    let mut history = Vec::new();
    fit_stage(
        &mut stage,
        1,
        &train.imagery,
        &train.labels,
        (&val.imagery, &val.fine),
        cfg,
        &mut history,
    )?;
    Ok((stage, history))
}

fn stage2_inputs(stage1: &Stage, set: &TrainSet, batch: usize) -> Result<Vec<Tensor>> {
    let p1 = predict_all(stage1, &set.imagery, batch)?;
    (0..set.len())
        .map(|i| fuse(&set.imagery[i], &p1[i], set.points.as_ref().map(|p| &p[i])))
        .collect()
}

/// Train a model on prepared sets. `stage1` reuses an already trained first
/// stage (sequential schedule only); it must come from [`train_stage1`] with
/// the same label kind, seed and hyperparameters.
pub fn train_sets(
    train: &TrainSet,
    val: &TrainSet,
    kind: ModelKind,
    cfg: &TrainConfig,
    stage1: Option<(Stage, Vec<EpochMetrics>)>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if kind == ModelKind::Unet && cfg.use_points() {
        return Err(Error::Config("a plain UNet does not take points".into()));
    }
    if cfg.use_points() && (train.points.is_none() || (!val.is_empty() && val.points.is_none())) {
        return Err(Error::Manifest("point rasters were not loaded".into()));
    }
    let c = train.channels()?;
    if cfg.schedule == StageSchedule::Joint && kind == ModelKind::Refiner {
        if stage1.is_some() {
            return Err(Error::Config("joint schedule cannot reuse a trained stage 1".into()));
        }
        return train_joint(train, val, cfg);
    }
    let (s1, mut history) = match stage1 {
        Some(s) => s,
        None => train_stage1(train, val, cfg)?,
    };
    if s1.net.spec() != &arch_for(cfg, c) {
        return Err(Error::Config("reused stage 1 has a different architecture".into()));
    }
    let model = match kind {
        ModelKind::Unet => Model {
            kind,
            stage1: s1,
            stage2: None,
            use_points: false,
        },
        ModelKind::Refiner => {
            let spec2 = arch_for(cfg, stage2_channels(c, cfg.use_points()));
            let mut s2 = Stage::init(spec2, super::model::STAGE2_PREFIX, stage_seed(cfg.seed, 2))?;
            let inputs = stage2_inputs(&s1, train, cfg.batch_size)?;
            let val_inputs = stage2_inputs(&s1, val, cfg.batch_size)?;
            fit_stage(
                &mut s2,
                2,
                &inputs,
                &train.labels,
                (&val_inputs, &val.fine),
                cfg,
                &mut history,
            )?;
            Model {
                kind,
                stage1: s1,
                stage2: Some(s2),
                use_points: cfg.use_points(),
            }
        }
    };
    let stages = if model.stage2.is_some() { 2 } else { 1 };
    Ok(Checkpoint {
        model,
        config: cfg.clone(),
        history,
        steps: steps_for(train.len(), cfg, stages),
    })
}

fn train_joint(train: &TrainSet, val: &TrainSet, cfg: &TrainConfig) -> Result<Checkpoint> {
    let c = train.channels()?;
    let mut model = Model::refiner(
        arch_for(cfg, c),
        arch_for(cfg, stage2_channels(c, cfg.use_points())),
        cfg.use_points(),
        cfg.seed,
    )?;
    let mut opt1 = OptimState::new(cfg.optimizer, cfg.learning_rate)?;
    let mut opt2 = opt1.clone();
    let mut shuffle = rng::stream(rng::derive(cfg.seed, "joint"), "shuffle");
    let mut history = Vec::new();
    let steps = steps_for(train.len(), cfg, 1);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in batches(train.len(), cfg, &mut shuffle) {
            let lr = cfg.lr_schedule.rate(cfg.learning_rate, opt1.step_count, steps);
            opt1.learning_rate = lr;
            opt2.learning_rate = lr;
            let x = gather(&train.imagery, &idx)?;
            let t = gather(&train.labels, &idx)?;
            let s2 = model.stage2.as_mut().expect("refiner");
            let mut tape = Tape::new();
            let xv = tape.constant(x)?;
            let y1 = model.stage1.net.forward(&mut tape, &model.stage1.params, xv)?;
            let mut fused = tape.concat(xv, y1)?;
            if let Some(p) = &train.points {
                let pv = tape.constant(gather(p, &idx)?)?;
                fused = tape.concat(fused, pv)?;
            }
            let y2 = s2.net.forward(&mut tape, &s2.params, fused)?;
            let (l1, g1) = bce_loss(tape.value(y1), &t, cfg.weight_pos).map_err(|e| nonfinite(e, 1, epoch))?;
            let (l2, g2) = bce_loss(tape.value(y2), &t, cfg.weight_pos).map_err(|e| nonfinite(e, 2, epoch))?;
            let grads = tape.backward(vec![(y1, g1), (y2, g2)])?;
            tape.accumulate_params(&grads, &mut model.stage1.params)?;
            tape.accumulate_params(&grads, &mut s2.params)?;
            optim_step(&mut model.stage1.params, &mut opt1)?;
            optim_step(&mut s2.params, &mut opt2)?;
            total += (l1 + l2) * idx.len() as f64;
        }
        let probs = predict_model(&model, val, cfg.batch_size)?;
        let (val_acc, val_miou) = validation(&probs, &val.fine)?;
        history.push(EpochMetrics {
            stage: 0,
            epoch,
            loss: total / train.len() as f64,
            val_acc,
            val_miou,
        });
    }
    Ok(Checkpoint {
        model,
        config: cfg.clone(),
        history,
        steps: opt1.step_count,
    })
}

/// Final probabilities for every tile of a set, using its loaded points.
pub fn predict_model(model: &Model, set: &TrainSet, batch: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let x = gather(&set.imagery, chunk)?;
        let p = match (&set.points, model.use_points) {
            (Some(p), true) => Some(gather(p, chunk)?),
            _ => None,
        };
        let y = model.predict(&x, p.as_ref())?;
        let [_, c, h, w] = y.shape();
        for s in 0..chunk.len() {
            out.push(Tensor::new([1, c, h, w], y.sample(s).to_vec())?);
        }
    }
    Ok(out)
}

/// Load the manifest's train split (and monitoring tiles from the test
/// split) and train.
pub fn train(manifest: &Manifest, kind: ModelKind, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let tags: Vec<String> = cfg.points.iter().cloned().collect();
    let samples = manifest.load_split(Split::Train, &tags)?;
    if samples.is_empty() {
        return Err(Error::Manifest("manifest has no training tiles".into()));
    }
    let val_records: Vec<_> = manifest.records_in(Split::Test).take(cfg.val_tiles).collect();
    let val_samples = val_records
        .into_iter()
        .map(|r| manifest.load_sample(r, &tags))
        .collect::<Result<Vec<_>>>()?;
    let train_set = TrainSet::from_samples(&samples, cfg.label_kind, cfg.points.as_deref())?;
    let val_set = TrainSet::from_samples(&val_samples, cfg.label_kind, cfg.points.as_deref())?;
    train_sets(&train_set, &val_set, kind, cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_rate_endpoints() {
        let c = LrSchedule::Cosine;
        assert_eq!(c.rate(0.4, 0, 100), 0.4);
        assert!((c.rate(0.4, 50, 100) - 0.2).abs() < 1e-15);
        assert!(c.rate(0.4, 99, 100) < 0.4 * 3e-4);
        let r: Vec<f64> = (0..100).map(|s| c.rate(0.4, s, 100)).collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(LrSchedule::Constant.rate(0.4, 99, 100), 0.4);
    }

    #[test]
    fn config_pairs_roundtrip() {
        let cfg = TrainConfig {
            lr_schedule: LrSchedule::Constant,
            ..TrainConfig::default()
        };
        let pairs = cfg.to_pairs();
        let back = TrainConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }
}

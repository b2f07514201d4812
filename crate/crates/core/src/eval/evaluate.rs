use rayon::prelude::*;

use super::metrics::{confusion, mean_iou, pixel_accuracy, Confusion};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split, TileSample};
use crate::refiner::{infer, Checkpoint};

/// Dataset-level metrics from one global confusion.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub miou: f64,
    pub iou_water: Option<f64>,
    pub iou_land: Option<f64>,
    pub confusion: Confusion,
    pub tiles: usize,
    /// Free-form cell description: model, labels, points.
    pub cell: String,
}

impl EvalReport {
    pub fn from_confusion(c: Confusion, tiles: usize, cell: impl Into<String>) -> Result<Self> {
        let [iou_water, iou_land] = c.class_iou();
        Ok(EvalReport {
            accuracy: pixel_accuracy(&c)?,
            miou: mean_iou(&c)?,
            iou_water,
            iou_land,
            confusion: c,
            tiles,
            cell: cell.into(),
        })
    }

    /// `key=value` lines.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("excluded".to_string(), |v| format!("{v:.4}"));
        let c = &self.confusion;
        format!(
            "cell={}\ntiles={}\nacc={:.4}\nmiou={:.4}\niou_water={}\niou_nonwater={}\ntp={}\nfp={}\ntn={}\nfn={}\naggregation=global\ntruth=fine\n",
            self.cell,
            self.tiles,
            self.accuracy,
            self.miou,
            opt(self.iou_water),
            opt(self.iou_land),
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        )
    }
}

fn cell_name(ckpt: &Checkpoint, points: Option<&str>) -> String {
    format!(
        "{}/{}{}",
        ckpt.model.kind,
        ckpt.config.label_kind,
        points.map(|p| format!("+{p}")).unwrap_or_default()
    )
}

/// Infer every sample and compare against its fine mask. `points` names the
/// point raster fed to a points-trained model.
pub fn evaluate_samples(
    ckpt: &Checkpoint,
    samples: &[TileSample],
    points: Option<&str>,
    threshold: f64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("no tiles to evaluate".into()));
    }
    let points = if ckpt.model.use_points { points } else { None };
    if ckpt.model.use_points && points.is_none() {
        return Err(Error::InvalidParam("points-trained model needs a point raster tag".into()));
    }
    let per_tile: Vec<Confusion> = samples
        .par_iter()
        .map(|s| {
            let p = match points {
                Some(tag) => Some(s.points(tag).ok_or_else(|| {
                    Error::Manifest(format!("tile {} has no point raster {tag:?}", s.tile_id))
                })?),
                None => None,
            };
            let (_, mask) = infer(ckpt, &s.imagery, p, threshold)?;
            confusion(&mask, &s.fine)
        })
        .collect::<Result<_>>()?;
    let total: Confusion = per_tile.into_iter().sum();
    EvalReport::from_confusion(total, samples.len(), cell_name(ckpt, points))
}

/// Evaluate on a manifest split. Without an explicit tag a points model uses
/// the scenario it was trained on.
pub fn evaluate(ckpt: &Checkpoint, manifest: &Manifest, split: Split, points: Option<&str>) -> Result<EvalReport> {
    let tag = match (ckpt.model.use_points, points) {
        (false, _) => None,
        (true, Some(t)) => Some(t.to_string()),
        (true, None) => ckpt.config.points.clone(),
    };
    let tags: Vec<String> = tag.iter().cloned().collect();
    let samples = manifest.load_split(split, &tags)?;
    evaluate_samples(ckpt, &samples, tag.as_deref(), 0.5)
}

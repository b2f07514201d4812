use std::path::Path;

use super::model::{tile_tensor, mask_tensor, Model, ModelKind, Stage, STAGE1_PREFIX, STAGE2_PREFIX};
use super::train::{Checkpoint, EpochMetrics, TrainConfig};
use super::unet::{ArchSpec, UNet};
use crate::error::{Error, Result};
use crate::nn::{CheckpointFile, ParamStore};
use crate::raster::{BinaryMask, MultispectralTile, ProbabilityMask};

const FORMAT: &str = "floodrefine-model-1";

fn stage_params(stage: &Stage) -> Vec<(String, crate::nn::Tensor)> {
    stage
        .params
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect()
}

fn load_stage(file: &CheckpointFile, spec: ArchSpec, prefix: &str) -> Result<Stage> {
    let mut params = ParamStore::new();
    let dot = format!("{prefix}.");
    for (name, t) in file.params.iter().filter(|(n, _)| n.starts_with(&dot)) {
        params.add(name, t.clone())?;
    }
    let net = UNet::bind(spec, &params, prefix)?;
    if params.len() != spec.conv_layout().len() * 2 {
        return Err(Error::Checkpoint(format!("unexpected extra parameters under {prefix}")));
    }
    Ok(Stage { net, params })
}

impl Checkpoint {
    pub fn to_file(&self) -> CheckpointFile {
        let m = &self.model;
        let mut header = vec![
            ("format".to_string(), FORMAT.to_string()),
            ("kind".to_string(), m.kind.as_str().to_string()),
            ("use_points".to_string(), m.use_points.to_string()),
            ("steps".to_string(), self.steps.to_string()),
            ("stage1_arch".to_string(), m.stage1.net.spec().descriptor()),
        ];
        if let Some(s2) = &m.stage2 {
            header.push(("stage2_arch".into(), s2.net.spec().descriptor()));
        }
        for (k, v) in self.config.to_pairs() {
            header.push((format!("cfg.{k}"), v));
        }
        for h in &self.history {
            header.push(("history".into(), h.render()));
        }
        let mut params = stage_params(&m.stage1);
        if let Some(s2) = &m.stage2 {
            params.extend(stage_params(s2));
        }
        CheckpointFile { header, params }
    }

    pub fn from_file(file: &CheckpointFile) -> Result<Self> {
        if file.require("format")? != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {:?}", file.require("format")?)));
        }
        let kind = ModelKind::parse(file.require("kind")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let use_points = match file.require("use_points")? {
            "true" => true,
            "false" => false,
            v => return Err(Error::Checkpoint(format!("bad use_points {v:?}"))),
        };
        let steps = file
            .require("steps")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad steps".into()))?;
        let spec1 = ArchSpec::parse(file.require("stage1_arch")?)?;
        let stage1 = load_stage(file, spec1, STAGE1_PREFIX)?;
        let stage2 = match (kind, file.get("stage2_arch")) {
            (ModelKind::Refiner, Some(a)) => Some(load_stage(file, ArchSpec::parse(a)?, STAGE2_PREFIX)?),
            (ModelKind::Unet, None) => None,
            _ => return Err(Error::Checkpoint("stage 2 presence does not match model kind".into())),
        };
        let config = TrainConfig::from_pairs(
            file.header
                .iter()
                .filter_map(|(k, v)| k.strip_prefix("cfg.").map(|k| (k, v.as_str()))),
        )
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let history = file
            .get_all("history")
            .map(EpochMetrics::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            model: Model {
                kind,
                stage1,
                stage2,
                use_points,
            },
            config,
            history,
            steps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&CheckpointFile::load(path)?)
    }

    /// Bit-level equality of every parameter.
    pub fn params_bits_eq(&self, other: &Checkpoint) -> bool {
        let (a, b) = (&self.model, &other.model);
        a.stage1.params.bits_eq(&b.stage1.params)
            && match (&a.stage2, &b.stage2) {
                (Some(x), Some(y)) => x.params.bits_eq(&y.params),
                (None, None) => true,
                _ => false,
            }
    }
}

/// Water probability and its thresholded mask (`p >= threshold` is water).
pub fn infer(
    ckpt: &Checkpoint,
    tile: &MultispectralTile,
    points: Option<&BinaryMask>,
    threshold: f64,
) -> Result<(ProbabilityMask, BinaryMask)> {
    let model = &ckpt.model;
    if tile.channels() != model.imagery_channels() {
        return Err(Error::Shape(format!(
            "tile has {} channels, model expects {}",
            tile.channels(),
            model.imagery_channels()
        )));
    }
    if let Some(p) = points {
        if p.width() != tile.width() || p.height() != tile.height() {
            return Err(Error::Shape("point raster and tile sizes differ".into()));
        }
    }
    let pt = points.map(mask_tensor);
    let y = model.predict(&tile_tensor(tile), pt.as_ref())?;
    let prob = ProbabilityMask::new(tile.width(), tile.height(), y.into_data())?;
    let mask = prob.threshold(threshold);
    Ok((prob, mask))
}

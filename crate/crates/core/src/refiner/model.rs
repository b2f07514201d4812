use std::fmt;

use super::unet::{ArchSpec, UNet};
use crate::error::{Error, Result};
use crate::nn::{concat_channels, ParamStore, Tape, Tensor};
use crate::raster::{BinaryMask, MultispectralTile};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Unet,
    Refiner,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Unet => "unet",
            ModelKind::Refiner => "refiner",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(ModelKind::Unet),
            "refiner" => Ok(ModelKind::Refiner),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One UNet and its parameters.
#[derive(Debug, Clone)]
pub struct Stage {
    pub net: UNet,
    pub params: ParamStore,
}

impl Stage {
    pub fn init(spec: ArchSpec, prefix: &str, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = UNet::build(spec, &mut params, prefix, &mut rng::stream(seed, "init"))?;
        Ok(Stage { net, params })
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let y = self.net.forward(&mut tape, &self.params, xv)?;
        Ok(tape.value(y).clone())
    }
}

/// A single UNet, or the two-stage refiner whose second stage sees
/// `concat(imagery, stage-1 probability, point raster?)`.
#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub stage1: Stage,
    pub stage2: Option<Stage>,
    pub use_points: bool,
}

pub const STAGE1_PREFIX: &str = "s1";
pub const STAGE2_PREFIX: &str = "s2";

/// Channels the second stage expects for `imagery_channels` inputs.
pub fn stage2_channels(imagery_channels: usize, use_points: bool) -> usize {
    imagery_channels + 1 + usize::from(use_points)
}

impl Model {
    pub fn unet(spec: ArchSpec, seed: u64) -> Result<Self> {
        Ok(Model {
            kind: ModelKind::Unet,
            stage1: Stage::init(spec, STAGE1_PREFIX, rng::derive(seed, "stage1"))?,
            stage2: None,
            use_points: false,
        })
    }

    pub fn refiner(stage1: ArchSpec, stage2: ArchSpec, use_points: bool, seed: u64) -> Result<Self> {
        let want = stage2_channels(stage1.in_channels, use_points);
        if stage2.in_channels != want {
            return Err(Error::Shape(format!(
                "stage 2 needs {want} input channels ({} imagery + 1 probability{}), spec has {}",
                stage1.in_channels,
                if use_points { " + 1 points" } else { "" },
                stage2.in_channels
            )));
        }
        Ok(Model {
            kind: ModelKind::Refiner,
            stage1: Stage::init(stage1, STAGE1_PREFIX, rng::derive(seed, "stage1"))?,
            stage2: Some(Stage::init(stage2, STAGE2_PREFIX, rng::derive(seed, "stage2"))?),
            use_points,
        })
    }

    pub fn imagery_channels(&self) -> usize {
        self.stage1.net.spec().in_channels
    }

    pub fn check_points(&self, points: Option<&Tensor>) -> Result<()> {
        match (self.use_points, points.is_some()) {
            (true, false) => Err(Error::InvalidParam(
                "model was trained with points; a point raster is required".into(),
            )),
            (false, true) => Err(Error::InvalidParam(
                "model was trained without points; drop the point raster".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Final water probability for a batch, N×1×H×W.
    pub fn predict(&self, imagery: &Tensor, points: Option<&Tensor>) -> Result<Tensor> {
        self.check_points(points)?;
        let p1 = self.stage1.predict(imagery)?;
        match &self.stage2 {
            None => Ok(p1),
            Some(s2) => s2.predict(&fuse(imagery, &p1, points)?),
        }
    }
}

/// Stage-2 input: imagery, stage-1 probability and optional point raster.
pub fn fuse(imagery: &Tensor, stage1: &Tensor, points: Option<&Tensor>) -> Result<Tensor> {
    let x = concat_channels(imagery, stage1)?;
    match points {
        Some(p) => concat_channels(&x, p),
        None => Ok(x),
    }
}

pub fn tile_tensor(tile: &MultispectralTile) -> Tensor {
    Tensor::new([1, tile.channels(), tile.height(), tile.width()], tile.data().to_vec())
        .expect("tile shape")
}

pub fn mask_tensor(mask: &BinaryMask) -> Tensor {
    Tensor::new(
        [1, 1, mask.height(), mask.width()],
        mask.data().iter().map(|&v| f64::from(v)).collect(),
    )
    .expect("mask shape")
}

/// Stack single-sample tensors along the batch axis.
pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    let [_, c, h, w] = first.shape();
    let mut data = Vec::with_capacity(items.len() * c * h * w);
    for t in items {
        if t.shape() != [1, c, h, w] {
            return Err(Error::Shape(format!(
                "stack expects 1x{c}x{h}x{w}, got {:?}",
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new([items.len(), c, h, w], data)
}

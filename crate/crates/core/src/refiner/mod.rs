//! Two-stage water segmentation: a UNet on imagery, and a refiner that feeds
//! the first stage's probabilities (and optionally street points) to a
//! second UNet.

mod check;
mod io;
mod model;
mod train;
mod unet;

pub use check::{check_refiner, NetCheckSpec};
pub use io::infer;
pub use model::{fuse, mask_tensor, stack, stage2_channels, tile_tensor, Model, ModelKind, Stage};
pub use train::{
    metrics_log, predict_model, train, train_sets, train_stage1, Checkpoint, EpochMetrics,
    LabelKind, LrSchedule, StageSchedule, TrainConfig, TrainSet,
};
pub use unet::{ArchSpec, UNet};

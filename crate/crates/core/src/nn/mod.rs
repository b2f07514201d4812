//! Minimal reverse-mode engine: the operators a small UNet needs, optimizers,
//! finite-difference checking and the checkpoint container.

mod checkpoint;
mod gradcheck;
mod opcheck;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::CheckpointFile;
pub use gradcheck::{grad_check, rel_err, GradCheckConfig, GradCheckReport, Segment};
pub use ops::{
    bce_loss, concat_channels, conv2d, conv2d_backward, maxpool2, maxpool2_backward, relu,
    relu_backward, sigmoid, sigmoid_backward, split_channels, upsample2, upsample2_backward,
    ConvGrads, BCE_CLAMP,
};
pub use opcheck::{check_op, OPS};
pub use optim::{optim_step, OptimKind, OptimState};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

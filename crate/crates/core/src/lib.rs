//! Flood extent segmentation from coarse labels and sparse crowdsourced
//! boundary points.
//!
//! The crate covers the whole desk-scale pipeline: synthetic scenes and
//! labels ([`synth`]), a small reverse-mode network engine ([`nn`]), the
//! two-stage refiner and its UNet baseline ([`refiner`]), metrics and the
//! benchmark/ablation runners ([`eval`]).

pub mod config;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod nn;
pub mod raster;
pub mod refiner;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

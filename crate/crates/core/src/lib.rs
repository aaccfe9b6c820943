//! Watermarking toolkit for 3D Gaussian Splatting models.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod camera;
pub mod codec;
pub mod config;
pub mod distort;
pub mod error;
pub mod experts;
pub mod finetune;
pub mod gaussian;
pub mod image;
pub mod jpeg;
pub mod knn;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod ply;
pub mod prune;
pub mod render;
pub mod resample;
pub mod sbag;
pub mod sh;
pub mod stats;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};

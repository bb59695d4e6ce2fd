//! Keypoint object detection with compact hourglass backbones.
//!
//! The crate covers four layers, bottom-up:
//!
//! - [`tensor`]: a dense NCHW tensor and the convolution, pooling, resampling and
//!   activation kernels the backbones need.
//! - [`blocks`] and [`arch`]: residual and fire blocks, declarative hourglass
//!   graphs (`hourglass54`, `squeeze`, and a 104-layer reference), a graph
//!   executor, and parameter/MAC/activation-memory accounting.
//! - [`decode`]: corner heatmap peak extraction, embedding-based grouping, and
//!   forward values of the training losses.
//! - [`saccade`]: the attention-guided crop pipeline that finds candidate object
//!   locations on downsized images, zooms into them and merges detections.
//!
//! [`harness`] renders synthetic scenes together with "perfect network" outputs
//! so the geometry can be checked end to end without trained weights.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the element type to `f32`, which is what file I/O and the pipeline use.

pub mod arch;
pub mod blocks;
pub mod decode;
mod error;
pub mod harness;
pub mod saccade;
mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Weights32 = arch::Weights<f32>;
pub type Weights64 = arch::Weights<f64>;
pub type CornerMaps32 = blocks::CornerMaps<f32>;

//! Training and inference engine for a lightweight three-class U-Net
//! (background / bioink / nozzle) built on depthwise-separable convolutions.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod raster;
pub mod runtime;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod train;

pub use data::LabeledFrame;
pub use error::{Error, ErrorKind, Result};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use model::{ArchConfig, ModelParams};
pub use tensor::{Scalar, Shape, Tensor4};

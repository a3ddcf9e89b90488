//! Deployment side: weights file, the inference pipeline, latency
//! benchmarking and complexity reporting.

mod bench;
mod describe;
mod infer;
mod weights;

pub use bench::{benchmark, LatencyReport, LatencyStats, REFERENCE_LATENCIES};
pub use describe::{describe, ComplexityReport};
pub use infer::{
    argmax_channels, evaluate_predictor, overlay, write_overlay, Predictor, SoftmaxMode,
    StageTimes,
};
pub use weights::{WeightsFile, MAGIC, VERSION};

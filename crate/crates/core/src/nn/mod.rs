//! Forward and backward kernels for every layer of the network.

mod activation;
mod conv;
mod pool;
mod upsample;

pub use activation::{relu_bwd, relu_fwd, softmax_channels_fwd};
pub use conv::{
    depthwise_conv3x3_bwd, depthwise_conv3x3_fwd, dwsep_block_bwd, dwsep_block_fwd,
    dwsep_param_count, pointwise_conv1x1_bwd, pointwise_conv1x1_fwd, Activation, ConvDWParams,
    DwSepCache, DwSepRef,
};
pub use pool::{maxpool2x2_bwd, maxpool2x2_fwd, PoolIndices};
pub use upsample::{bilinear_up2x_bwd, bilinear_up2x_fwd};

use crate::tensor::{Scalar, Tensor4};

/// Gradient of a layer wrt its input and its parameters.
#[derive(Debug, Clone)]
pub struct GradPair<P, T = f32> {
    pub input: Tensor4<T>,
    pub params: P,
}

/// Dot product with eight independent accumulators, combined in a fixed
/// order so results do not depend on how the caller is scheduled.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

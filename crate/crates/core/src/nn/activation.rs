use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor4};

pub fn relu_fwd<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `dy` where `x > 0`. Also valid with the forward output in place of
/// `x`, since both are positive at the same positions.
pub fn relu_bwd<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    if x.shape() != dy.shape() {
        return Err(shape_err!("relu bwd: x {} vs dy {}", x.shape(), dy.shape()));
    }
    let mut out = dy.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}

/// Per-pixel softmax over the channel axis, max-subtracted.
pub fn softmax_channels_fwd<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let s = x.shape();
    let (c, p) = (s.c, s.plane());
    let mut out = Tensor4::zeros(s);
    out.data_mut()
        .par_chunks_mut(c * p)
        .enumerate()
        .for_each(|(n, block)| {
            let src = &x.data()[n * c * p..(n + 1) * c * p];
            for i in 0..p {
                let mut m = T::neg_infinity();
                for k in 0..c {
                    m = m.max(src[k * p + i]);
                }
                let mut z = T::zero();
                for k in 0..c {
                    let e = (src[k * p + i] - m).exp();
                    block[k * p + i] = e;
                    z += e;
                }
                for k in 0..c {
                    block[k * p + i] /= z;
                }
            }
        });
    out
}

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Shape, Tensor4};

/// Winner positions recorded by [`maxpool2x2_fwd`]: for each output element,
/// the flat offset of the selected input element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties go to the first element in row-major
/// window order.
pub fn maxpool2x2_fwd<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndices)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(shape_err!("maxpool2x2 needs even spatial dims, got {s}"));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let os = Shape { h: oh, w: ow, ..s };
    let planes: Vec<(Vec<T>, Vec<usize>)> = (0..s.n * s.c)
        .into_par_iter()
        .map(|i| {
            let base = i * s.plane();
            let src = &x.data()[base..base + s.plane()];
            let mut vals = Vec::with_capacity(oh * ow);
            let mut idx = Vec::with_capacity(oh * ow);
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = 2 * oy * s.w + 2 * ox;
                    let mut best = top;
                    for cand in [top + 1, top + s.w, top + s.w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    vals.push(src[best]);
                    idx.push(base + best);
                }
            }
            (vals, idx)
        })
        .collect();
    let mut data = Vec::with_capacity(os.len());
    let mut argmax = Vec::with_capacity(os.len());
    for (v, i) in planes {
        data.extend(v);
        argmax.extend(i);
    }
    Ok((
        Tensor4::from_vec(os, data)?,
        PoolIndices {
            input_shape: s,
            argmax,
        },
    ))
}

pub fn maxpool2x2_bwd<T: Scalar>(indices: &PoolIndices, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    if dy.len() != indices.argmax.len() {
        return Err(shape_err!(
            "maxpool bwd: dy {} vs {} recorded windows",
            dy.shape(),
            indices.argmax.len()
        ));
    }
    let mut dx = Tensor4::zeros(indices.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in indices.argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    Ok(dx)
}

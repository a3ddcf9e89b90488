//! Depthwise 3×3, pointwise 1×1 and the composed depthwise-separable block.
//!
//! Kernel layouts: depthwise weight `(C, 1, 3, 3)`, pointwise weight
//! `(C_out, C_in, 1, 1)`, biases `(C, 1, 1, 1)`.

use rayon::prelude::*;

use super::activation::{relu_bwd, relu_fwd};
use super::{dot, GradPair};
use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Shape, Tensor4};

fn check_bias<T: Scalar>(bias: &Tensor4<T>, c: usize, what: &str) -> Result<()> {
    let s = bias.shape();
    if s.n != c || s.c != 1 || s.h != 1 || s.w != 1 {
        return Err(shape_err!("{what} bias {s} does not match {c} channels"));
    }
    Ok(())
}

fn check_depthwise<T: Scalar>(x: Shape, weight: &Tensor4<T>, bias: &Tensor4<T>) -> Result<()> {
    let k = weight.shape();
    if k.c != 1 || k.h != 3 || k.w != 3 {
        return Err(shape_err!("depthwise kernel must be (C,1,3,3), got {k}"));
    }
    if k.n != x.c {
        return Err(shape_err!("depthwise kernel has {} channels, input {x}", k.n));
    }
    check_bias(bias, x.c, "depthwise")
}

fn check_pointwise<T: Scalar>(x: Shape, weight: &Tensor4<T>, bias: &Tensor4<T>) -> Result<()> {
    let k = weight.shape();
    if k.h != 1 || k.w != 1 {
        return Err(shape_err!("pointwise kernel must be (C_out,C_in,1,1), got {k}"));
    }
    if k.c != x.c {
        return Err(shape_err!("pointwise kernel expects {} input channels, input {x}", k.c));
    }
    check_bias(bias, k.n, "pointwise")
}

/// Zero-padded 3×3 correlation of one plane.
fn depthwise_plane<T: Scalar>(x: &[T], k: &[T], bias: T, h: usize, w: usize, out: &mut [T]) {
    out.fill(bias);
    for oy in 0..h {
        let dst = &mut out[oy * w..(oy + 1) * w];
        for ky in 0..3 {
            let sy = oy as isize + ky as isize - 1;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let sy = sy as usize;
            let src = &x[sy * w..(sy + 1) * w];
            let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
            for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                *d += k0 * s;
            }
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += k1 * s;
            }
            for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                *d += k2 * s;
            }
        }
    }
}

pub fn depthwise_conv3x3_fwd<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let s = x.shape();
    check_depthwise(s, weight, bias)?;
    let mut out = Tensor4::zeros(s);
    let p = s.plane();
    out.data_mut()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, plane)| {
            let (n, c) = (i / s.c, i % s.c);
            depthwise_plane(
                x.plane(n, c),
                &weight.data()[c * 9..c * 9 + 9],
                bias.data()[c],
                s.h,
                s.w,
                plane,
            );
        });
    Ok(out)
}

/// Returns gradients wrt input, kernel and bias.
pub fn depthwise_conv3x3_bwd<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>, Tensor4<T>)> {
    let s = x.shape();
    if dy.shape() != s {
        return Err(shape_err!("depthwise bwd: dy {} vs input {s}", dy.shape()));
    }
    let k = weight.shape();
    if k.n != s.c || k.c != 1 || k.h != 3 || k.w != 3 {
        return Err(shape_err!("depthwise bwd: kernel {k} vs input {s}"));
    }
    let (h, w, p) = (s.h, s.w, s.plane());

    let mut dx = Tensor4::zeros(s);
    dx.data_mut()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, dxp)| {
            let (n, c) = (i / s.c, i % s.c);
            let kk = &weight.data()[c * 9..c * 9 + 9];
            let g = dy.plane(n, c);
            for oy in 0..h {
                let src = &g[oy * w..(oy + 1) * w];
                for ky in 0..3 {
                    let sy = oy as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let dst = &mut dxp[sy * w..(sy + 1) * w];
                    let (k0, k1, k2) = (kk[ky * 3], kk[ky * 3 + 1], kk[ky * 3 + 2]);
                    for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                        *d += k0 * s;
                    }
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += k1 * s;
                    }
                    for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                        *d += k2 * s;
                    }
                }
            }
        });

    let per_channel: Vec<([T; 9], T)> = (0..s.c)
        .into_par_iter()
        .map(|c| {
            let mut dk = [T::zero(); 9];
            let mut db = T::zero();
            for n in 0..s.n {
                let g = dy.plane(n, c);
                let xp = x.plane(n, c);
                db += g.iter().copied().sum::<T>();
                for oy in 0..h {
                    let gr = &g[oy * w..(oy + 1) * w];
                    for ky in 0..3 {
                        let sy = oy as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let xr = &xp[sy * w..(sy + 1) * w];
                        dk[ky * 3] += dot(&gr[1..], &xr[..w - 1]);
                        dk[ky * 3 + 1] += dot(gr, xr);
                        dk[ky * 3 + 2] += dot(&gr[..w - 1], &xr[1..]);
                    }
                }
            }
            (dk, db)
        })
        .collect();

    let mut dk = Tensor4::zeros(k);
    let mut db = Tensor4::zeros(Shape { n: s.c, c: 1, h: 1, w: 1 });
    for (c, (kk, b)) in per_channel.into_iter().enumerate() {
        dk.data_mut()[c * 9..c * 9 + 9].copy_from_slice(&kk);
        db.data_mut()[c] = b;
    }
    Ok((dx, dk, db))
}

pub fn pointwise_conv1x1_fwd<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let s = x.shape();
    check_pointwise(s, weight, bias)?;
    let (c_out, c_in) = (weight.shape().n, s.c);
    let out_shape = s.with_c(c_out);
    let mut out = Tensor4::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(i, plane)| {
            let (n, co) = (i / c_out, i % c_out);
            plane.fill(bias.data()[co]);
            let row = &weight.data()[co * c_in..(co + 1) * c_in];
            for (ci, &k) in row.iter().enumerate() {
                for (o, &v) in plane.iter_mut().zip(x.plane(n, ci)) {
                    *o += k * v;
                }
            }
        });
    Ok(out)
}

pub fn pointwise_conv1x1_bwd<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>, Tensor4<T>)> {
    let s = x.shape();
    let k = weight.shape();
    let (c_out, c_in) = (k.n, k.c);
    if c_in != s.c || dy.shape() != s.with_c(c_out) {
        return Err(shape_err!(
            "pointwise bwd: input {s}, kernel {k}, dy {}",
            dy.shape()
        ));
    }

    let mut dx = Tensor4::zeros(s);
    dx.data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(i, plane)| {
            let (n, ci) = (i / c_in, i % c_in);
            for co in 0..c_out {
                let kv = weight.data()[co * c_in + ci];
                for (d, &g) in plane.iter_mut().zip(dy.plane(n, co)) {
                    *d += kv * g;
                }
            }
        });

    let rows: Vec<(Vec<T>, T)> = (0..c_out)
        .into_par_iter()
        .map(|co| {
            let mut row = vec![T::zero(); c_in];
            let mut db = T::zero();
            for n in 0..s.n {
                let g = dy.plane(n, co);
                db += g.iter().copied().sum::<T>();
                for (ci, r) in row.iter_mut().enumerate() {
                    *r += dot(g, x.plane(n, ci));
                }
            }
            (row, db)
        })
        .collect();

    let mut dk = Tensor4::zeros(k);
    let mut db = Tensor4::zeros(Shape { n: c_out, c: 1, h: 1, w: 1 });
    for (co, (row, b)) in rows.into_iter().enumerate() {
        dk.data_mut()[co * c_in..(co + 1) * c_in].copy_from_slice(&row);
        db.data_mut()[co] = b;
    }
    Ok((dx, dk, db))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Owned parameters of one depthwise-separable block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvDWParams<T = f32> {
    pub depthwise_kernel: Tensor4<T>,
    pub depthwise_bias: Tensor4<T>,
    pub pointwise_kernel: Tensor4<T>,
    pub pointwise_bias: Tensor4<T>,
}

/// Borrowed view of a block's parameters, so the model can run blocks
/// straight out of its flat parameter list.
#[derive(Debug, Clone, Copy)]
pub struct DwSepRef<'a, T = f32> {
    pub depthwise_kernel: &'a Tensor4<T>,
    pub depthwise_bias: &'a Tensor4<T>,
    pub pointwise_kernel: &'a Tensor4<T>,
    pub pointwise_bias: &'a Tensor4<T>,
}

impl<T: Scalar> ConvDWParams<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        let sh = |n, c, h, w| Shape { n, c, h, w };
        ConvDWParams {
            depthwise_kernel: Tensor4::zeros(sh(c_in, 1, 3, 3)),
            depthwise_bias: Tensor4::zeros(sh(c_in, 1, 1, 1)),
            pointwise_kernel: Tensor4::zeros(sh(c_out, c_in, 1, 1)),
            pointwise_bias: Tensor4::zeros(sh(c_out, 1, 1, 1)),
        }
    }

    pub fn as_ref(&self) -> DwSepRef<'_, T> {
        DwSepRef {
            depthwise_kernel: &self.depthwise_kernel,
            depthwise_bias: &self.depthwise_bias,
            pointwise_kernel: &self.pointwise_kernel,
            pointwise_bias: &self.pointwise_bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.depthwise_kernel.len()
            + self.depthwise_bias.len()
            + self.pointwise_kernel.len()
            + self.pointwise_bias.len()
    }

    pub fn tensors(&self) -> [&Tensor4<T>; 4] {
        [
            &self.depthwise_kernel,
            &self.depthwise_bias,
            &self.pointwise_kernel,
            &self.pointwise_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor4<T>; 4] {
        [
            &mut self.depthwise_kernel,
            &mut self.depthwise_bias,
            &mut self.pointwise_kernel,
            &mut self.pointwise_bias,
        ]
    }
}

/// Parameter count of a block with biases: `9·c_in + c_in + c_in·c_out + c_out`.
pub fn dwsep_param_count(c_in: usize, c_out: usize) -> usize {
    9 * c_in + c_in + c_in * c_out + c_out
}

/// Forward state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DwSepCache<T = f32> {
    pub input: Tensor4<T>,
    pub depthwise_out: Tensor4<T>,
    pub output: Tensor4<T>,
    pub activation: Activation,
}

pub fn dwsep_block_fwd<T: Scalar>(
    x: &Tensor4<T>,
    params: DwSepRef<'_, T>,
    activation: Activation,
) -> Result<(Tensor4<T>, DwSepCache<T>)> {
    let mid = depthwise_conv3x3_fwd(x, params.depthwise_kernel, params.depthwise_bias)?;
    let pre = pointwise_conv1x1_fwd(&mid, params.pointwise_kernel, params.pointwise_bias)?;
    let out = match activation {
        Activation::Relu => relu_fwd(&pre),
        Activation::Identity => pre,
    };
    let cache = DwSepCache {
        input: x.clone(),
        depthwise_out: mid,
        output: out.clone(),
        activation,
    };
    Ok((out, cache))
}

pub fn dwsep_block_bwd<T: Scalar>(
    cache: &DwSepCache<T>,
    params: DwSepRef<'_, T>,
    dy: &Tensor4<T>,
) -> Result<GradPair<ConvDWParams<T>, T>> {
    if dy.shape() != cache.output.shape() {
        return Err(crate::error::Error::Internal(format!(
            "block bwd: dy {} does not match cached output {}",
            dy.shape(),
            cache.output.shape()
        )));
    }
    // ReLU's mask can be read off the output: out > 0 exactly where pre > 0.
    let dpre = match cache.activation {
        Activation::Relu => relu_bwd(&cache.output, dy)?,
        Activation::Identity => dy.clone(),
    };
    let (dmid, dpw, dpb) = pointwise_conv1x1_bwd(&cache.depthwise_out, params.pointwise_kernel, &dpre)?;
    let (dx, ddw, ddb) = depthwise_conv3x3_bwd(&cache.input, params.depthwise_kernel, &dmid)?;
    Ok(GradPair {
        input: dx,
        params: ConvDWParams {
            depthwise_kernel: ddw,
            depthwise_bias: ddb,
            pointwise_kernel: dpw,
            pointwise_bias: dpb,
        },
    })
}

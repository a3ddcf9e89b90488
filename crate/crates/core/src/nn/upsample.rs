//! 2× bilinear upsampling with half-pixel centres and border clamping.
//!
//! Along one axis the output sample `o` reads source coordinate
//! `(o + 0.5) / 2 - 0.5`, which gives the fixed weights
//! `out[2i] = ¼·x[i-1] + ¾·x[i]` and `out[2i+1] = ¾·x[i] + ¼·x[i+1]`,
//! with out-of-range neighbours clamped to the edge. The 2-D operator is the
//! separable product, applied along rows then columns.

use rayon::prelude::*;

use crate::tensor::{Scalar, Shape, Tensor4};

fn quarter<T: Scalar>() -> (T, T) {
    (T::from_f64_lossy(0.25), T::from_f64_lossy(0.75))
}

fn up_line<T: Scalar>(src: &[T], dst: &mut [T]) {
    let (q, tq) = quarter::<T>();
    let n = src.len();
    for i in 0..n {
        let prev = src[i.saturating_sub(1)];
        let next = src[(i + 1).min(n - 1)];
        dst[2 * i] = q * prev + tq * src[i];
        dst[2 * i + 1] = tq * src[i] + q * next;
    }
}

/// Transpose of [`up_line`]: accumulates `dy` (length `2n`) into `dx` (length `n`).
fn up_line_t<T: Scalar>(dy: &[T], dx: &mut [T]) {
    let (q, tq) = quarter::<T>();
    let n = dx.len();
    for i in 0..n {
        let (g0, g1) = (dy[2 * i], dy[2 * i + 1]);
        dx[i.saturating_sub(1)] += q * g0;
        dx[i] += tq * g0 + tq * g1;
        dx[(i + 1).min(n - 1)] += q * g1;
    }
}

fn up_plane<T: Scalar>(x: &[T], h: usize, w: usize, out: &mut [T]) {
    let ow = 2 * w;
    let mut rows = vec![T::zero(); h * ow];
    for y in 0..h {
        up_line(&x[y * w..(y + 1) * w], &mut rows[y * ow..(y + 1) * ow]);
    }
    let mut col = vec![T::zero(); h];
    let mut col_out = vec![T::zero(); 2 * h];
    for xx in 0..ow {
        for y in 0..h {
            col[y] = rows[y * ow + xx];
        }
        up_line(&col, &mut col_out);
        for (y, &v) in col_out.iter().enumerate() {
            out[y * ow + xx] = v;
        }
    }
}

fn up_plane_t<T: Scalar>(dy: &[T], h: usize, w: usize, dx: &mut [T]) {
    let ow = 2 * w;
    let mut rows = vec![T::zero(); h * ow];
    let mut col_in = vec![T::zero(); 2 * h];
    let mut col = vec![T::zero(); h];
    for xx in 0..ow {
        for (y, v) in col_in.iter_mut().enumerate() {
            *v = dy[y * ow + xx];
        }
        col.fill(T::zero());
        up_line_t(&col_in, &mut col);
        for y in 0..h {
            rows[y * ow + xx] = col[y];
        }
    }
    for y in 0..h {
        up_line_t(&rows[y * ow..(y + 1) * ow], &mut dx[y * w..(y + 1) * w]);
    }
}

pub fn bilinear_up2x_fwd<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let s = x.shape();
    let os = Shape { h: 2 * s.h, w: 2 * s.w, ..s };
    let mut out = Tensor4::zeros(os);
    out.data_mut()
        .par_chunks_mut(os.plane())
        .enumerate()
        .for_each(|(i, plane)| {
            let src = &x.data()[i * s.plane()..(i + 1) * s.plane()];
            up_plane(src, s.h, s.w, plane);
        });
    out
}

/// Exact adjoint of [`bilinear_up2x_fwd`]. `dy` must have even spatial dims.
pub fn bilinear_up2x_bwd<T: Scalar>(dy: &Tensor4<T>) -> crate::error::Result<Tensor4<T>> {
    let os = dy.shape();
    if os.h % 2 != 0 || os.w % 2 != 0 {
        return Err(crate::error::shape_err!("upsample bwd needs even dims, got {os}"));
    }
    let s = Shape { h: os.h / 2, w: os.w / 2, ..os };
    let mut dx = Tensor4::zeros(s);
    dx.data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(i, plane)| {
            let src = &dy.data()[i * os.plane()..(i + 1) * os.plane()];
            up_plane_t(src, s.h, s.w, plane);
        });
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_pixel_row_example() {
        let x = Tensor4::from_vec(Shape::new(1, 1, 1, 2).unwrap(), vec![0.0f32, 1.0]).unwrap();
        let y = bilinear_up2x_fwd(&x);
        assert_eq!(y.shape().as_tuple(), (1, 1, 2, 4));
        assert_eq!(y.plane(0, 0)[..4], [0.0, 0.25, 0.75, 1.0]);
        assert_eq!(y.plane(0, 0)[4..], [0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constants_stay_constant() {
        let x = Tensor4::new_filled(Shape::new(2, 3, 3, 5).unwrap(), 1.75f32).unwrap();
        let y = bilinear_up2x_fwd(&x);
        assert!(y.data().iter().all(|&v| v == 1.75));
    }

    #[test]
    fn adjoint_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (h, w) in [(1, 1), (1, 2), (3, 4), (5, 2), (8, 8)] {
            let s = Shape::new(2, 2, h, w).unwrap();
            let x = Tensor4::from_vec(s, (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let os = Shape { h: 2 * h, w: 2 * w, ..s };
            let dy = Tensor4::from_vec(os, (0..os.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let lhs = bilinear_up2x_fwd(&x).dot(&dy).unwrap();
            let rhs: f64 = x.dot(&bilinear_up2x_bwd(&dy).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{h}x{w}: {lhs} vs {rhs}");
        }
    }
}

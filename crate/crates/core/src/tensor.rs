//! Dense rank-4 tensors in NCHW row-major layout.
//!
//! Production paths run in `f32`. The same kernels are instantiated with
//! `f64` for finite-difference gradient checks.

use std::fmt;
use std::ops::Range;

use num_traits::{Float, FromPrimitive, NumAssign};

use crate::error::{shape_err, Result};

/// Element type accepted by the tensor and kernel code.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Default + Send + Sync + fmt::Debug + std::iter::Sum + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(shape_err!("zero-sized dimension in ({n},{c},{h},{w})"));
        }
        Ok(Shape { n, c, h, w })
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && h < self.h && w < self.w);
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Shape::offset`].
    pub fn index(&self, offset: usize) -> (usize, usize, usize, usize) {
        let w = offset % self.w;
        let rest = offset / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        let c = rest % self.c;
        let n = rest / self.c;
        (n, c, h, w)
    }

    pub fn with_c(self, c: usize) -> Shape {
        Shape { c, ..self }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor4")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor4<T> {
    pub fn new_filled(shape: Shape, value: T) -> Result<Self> {
        let shape = Shape::new(shape.n, shape.c, shape.h, shape.w)?;
        Ok(Tensor4 {
            shape,
            data: vec![value; shape.len()],
        })
    }

    /// Zero tensor of an already-validated shape.
    pub fn zeros(shape: Shape) -> Self {
        assert!(!shape.is_empty(), "zeros() on empty shape {shape}");
        Tensor4 {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(shape.n, shape.c, shape.h, shape.w)?;
        if data.len() != shape.len() {
            return Err(shape_err!(
                "buffer of {} elements does not fit shape {shape}",
                data.len()
            ));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: T) {
        let o = self.shape.offset(n, c, h, w);
        self.data[o] = value;
    }

    /// The `h × w` plane at `(n, c)`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn elementwise(&self, other: &Tensor4<T>, op: ElementOp) -> Result<Tensor4<T>> {
        if self.shape != other.shape {
            return Err(shape_err!(
                "elementwise {op:?} on {} and {}",
                self.shape,
                other.shape
            ));
        }
        let f: fn(T, T) -> T = match op {
            ElementOp::Add => |a, b| a + b,
            ElementOp::Sub => |a, b| a - b,
            ElementOp::Mul => |a, b| a * b,
        };
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor4 {
            shape: self.shape,
            data,
        })
    }

    pub fn add(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.elementwise(other, ElementOp::Add)
    }

    pub fn sub(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.elementwise(other, ElementOp::Sub)
    }

    pub fn mul(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.elementwise(other, ElementOp::Mul)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("add_assign on {} and {}", self.shape, other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Tensor4<T> {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Tensor4<T>) -> Result<T> {
        if self.shape != other.shape {
            return Err(shape_err!("dot on {} and {}", self.shape, other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    /// Stack `a` and `b` along the channel axis: `a` fills `[0, a.c)`, `b`
    /// fills `[a.c, a.c + b.c)`.
    pub fn concat_channels(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (sa, sb) = (a.shape, b.shape);
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            return Err(shape_err!("concat_channels on {sa} and {sb}"));
        }
        let shape = sa.with_c(sa.c + sb.c);
        let mut data = Vec::with_capacity(shape.len());
        let (ba, bb) = (sa.c * sa.plane(), sb.c * sb.plane());
        for n in 0..sa.n {
            data.extend_from_slice(&a.data[n * ba..(n + 1) * ba]);
            data.extend_from_slice(&b.data[n * bb..(n + 1) * bb]);
        }
        Ok(Tensor4 { shape, data })
    }

    /// Copy of channels `range` as a new tensor.
    pub fn slice_channels(&self, range: Range<usize>) -> Result<Tensor4<T>> {
        let s = self.shape;
        if range.start >= range.end || range.end > s.c {
            return Err(shape_err!("channel slice {range:?} out of {s}"));
        }
        let shape = s.with_c(range.end - range.start);
        let p = s.plane();
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..s.n {
            let base = n * s.c * p;
            data.extend_from_slice(&self.data[base + range.start * p..base + range.end * p]);
        }
        Ok(Tensor4 { shape, data })
    }

    /// The single-sample tensor at batch index `n`.
    pub fn sample(&self, n: usize) -> Tensor4<T> {
        let s = self.shape;
        let block = s.c * s.plane();
        Tensor4 {
            shape: Shape { n: 1, ..s },
            data: self.data[n * block..(n + 1) * block].to_vec(),
        }
    }
}

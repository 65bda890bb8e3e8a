//! Rank-3 tensor storage and the axis-wise affine kernel every layer is
//! built on.
//!
//! Tensors are row-major with axis order (sequence `l`, modality `m`,
//! channel `d`), so channel fibers are contiguous. Values are immutable after
//! construction and every public operation rejects non-finite results instead
//! of letting NaN propagate.
//!
//! With the `parallel` feature the fiber kernels dispatch to rayon above a
//! work threshold. Each output element is computed by an independent,
//! self-contained dot product, so the parallel path is bit-identical to the
//! sequential one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of multiply-adds before the kernels go parallel. Below
/// this, rayon's spawn overhead dominates.
#[cfg(feature = "parallel")]
const PARALLEL_WORK_THRESHOLD: usize = 1 << 14;

/// The three mixing axes of a feature cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Sequence,
    Modality,
    Channel,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Sequence, Axis::Modality, Axis::Channel];

    /// Tensor axis index: sequence 0, modality 1, channel 2.
    pub fn index(self) -> usize {
        match self {
            Axis::Sequence => 0,
            Axis::Modality => 1,
            Axis::Channel => 2,
        }
    }

    /// Single-letter tag used in parameter names and file names.
    pub fn letter(self) -> char {
        match self {
            Axis::Sequence => 'L',
            Axis::Modality => 'M',
            Axis::Channel => 'D',
        }
    }
}

/// Extents of a rank-3 tensor: sequence length, modality count, channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub l: usize,
    pub m: usize,
    pub d: usize,
}

impl Shape3 {
    pub fn new(l: usize, m: usize, d: usize) -> Result<Self> {
        if l == 0 || m == 0 || d == 0 {
            return Err(Error::shape(
                "shape3",
                format!("all extents must be >= 1, got ({l}, {m}, {d})"),
            ));
        }
        l.checked_mul(m)
            .and_then(|lm| lm.checked_mul(d))
            .and_then(|n| isize::try_from(n).ok())
            .ok_or_else(|| {
                Error::shape("shape3", format!("element count overflows: ({l}, {m}, {d})"))
            })?;
        Ok(Shape3 { l, m, d })
    }

    pub fn len(&self) -> usize {
        self.l * self.m * self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::Sequence => self.l,
            Axis::Modality => self.m,
            Axis::Channel => self.d,
        }
    }

    pub fn with_extent(&self, axis: Axis, n: usize) -> Result<Self> {
        let mut s = *self;
        match axis {
            Axis::Sequence => s.l = n,
            Axis::Modality => s.m = n,
            Axis::Channel => s.d = n,
        }
        Shape3::new(s.l, s.m, s.d)
    }

    /// Splits the shape around `axis` into `(pre, n, post)` extents so that
    /// the flat index of element `(p, i, q)` is `(p * n + i) * post + q`.
    pub fn split(&self, axis: Axis) -> (usize, usize, usize) {
        match axis {
            Axis::Sequence => (1, self.l, self.m * self.d),
            Axis::Modality => (self.l, self.m, self.d),
            Axis::Channel => (self.l * self.m, self.d, 1),
        }
    }

    /// Flat index of `(l, m, d)`.
    pub fn index(&self, l: usize, m: usize, d: usize) -> usize {
        debug_assert!(l < self.l && m < self.m && d < self.d);
        (l * self.m + m) * self.d + d
    }
}

/// Dense row-major matrix, used for per-axis weights and per-modality
/// feature sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(
                "mat",
                format!("extents must be >= 1, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "mat",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Mat::new(rows, cols, vec![T::ZERO; rows.checked_mul(cols).ok_or_else(|| {
            Error::shape("mat", format!("element count overflows: {rows}x{cols}"))
        })?])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Mat::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::shape("mat", "no rows given"));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape(
                    "mat",
                    format!("ragged rows: expected {c} columns, got {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Mat::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Immutable rank-3 tensor of finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    shape: Shape3,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(shape: Shape3) -> Self {
        Tensor3 {
            shape,
            data: vec![T::ZERO; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape3, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "tensor3",
                format!("shape needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        let t = Tensor3 { shape, data };
        t.ensure_finite("tensor3")?;
        Ok(t)
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for l in 0..shape.l {
            for m in 0..shape.m {
                for d in 0..shape.d {
                    data.push(f(l, m, d));
                }
            }
        }
        Tensor3::from_vec(shape, data)
    }

    /// Stacks per-modality `L x D` matrices into an `(L, M, D)` cube, so that
    /// entry `(l, m, d)` equals `slices[m].get(l, d)`.
    pub fn from_slices(slices: &[Mat<T>]) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::shape("from_slices", "no modality slices given"));
        }
        let l = slices[0].rows();
        let d = slices[0].cols();
        for (m, s) in slices.iter().enumerate() {
            if s.rows() != l || s.cols() != d {
                return Err(Error::shape(
                    "from_slices",
                    format!(
                        "slice {m} is {}x{}, expected {l}x{d}",
                        s.rows(),
                        s.cols()
                    ),
                ));
            }
        }
        let shape = Shape3::new(l, slices.len(), d)?;
        Tensor3::from_fn(shape, |l, m, d| slices[m].get(l, d))
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, l: usize, m: usize, d: usize) -> T {
        self.data[self.shape.index(l, m, d)]
    }

    /// Row-major view of the tensor as a flat vector. Because storage is
    /// row-major (l, m, d), this is the identity on the underlying data.
    pub fn flatten(&self) -> &[T] {
        &self.data
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshaped(&self, shape: Shape3) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::shape(
                "reshape",
                format!(
                    "cannot reshape {} elements into shape of {}",
                    self.shape.len(),
                    shape.len()
                ),
            ));
        }
        Ok(Tensor3 {
            shape,
            data: self.data.clone(),
        })
    }

    /// Applies `w' * fiber + b` to every fiber along `axis`, with `w` of size
    /// `A_in x A_out` shared across fibers. The output shape equals the input
    /// shape with the axis extent replaced by `A_out`.
    pub fn axis_matmul(&self, w: &Mat<T>, b: &[T], axis: Axis) -> Result<Self> {
        self.axis_matmul_impl(w, b, axis, true)
    }

    /// Sequential reference path for [`Tensor3::axis_matmul`]. Used as the
    /// fallback when the `parallel` feature is off and by the benchmark
    /// suite; results are bit-identical to the parallel path.
    pub fn axis_matmul_sequential(&self, w: &Mat<T>, b: &[T], axis: Axis) -> Result<Self> {
        self.axis_matmul_impl(w, b, axis, false)
    }

    fn axis_matmul_impl(&self, w: &Mat<T>, b: &[T], axis: Axis, use_parallel: bool) -> Result<Self> {
        let (_, n_in, post) = self.shape.split(axis);
        if w.rows() != n_in {
            return Err(Error::shape(
                "axis_matmul",
                format!(
                    "axis {axis:?} extent {n_in} does not match weight rows {}",
                    w.rows()
                ),
            ));
        }
        let n_out = w.cols();
        if b.len() != n_out {
            return Err(Error::shape(
                "axis_matmul",
                format!("bias length {} does not match weight cols {n_out}", b.len()),
            ));
        }
        let out_shape = self.shape.with_extent(axis, n_out)?;
        let mut out = vec![T::ZERO; out_shape.len()];

        let x = &self.data;
        let wd = w.data();
        // One output element per (p, j, q); a self-contained dot product, so
        // scheduling order cannot change the result.
        let compute = move |idx: usize, slot: &mut T| {
            let p = idx / (n_out * post);
            let r = idx % (n_out * post);
            let j = r / post;
            let q = r % post;
            let mut acc = b[j];
            let base = p * n_in * post + q;
            for i in 0..n_in {
                acc += wd[i * n_out + j] * x[base + i * post];
            }
            *slot = acc;
        };

        #[cfg(feature = "parallel")]
        {
            let work = out.len().saturating_mul(n_in);
            if use_parallel && work >= PARALLEL_WORK_THRESHOLD {
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(idx, slot)| compute(idx, slot));
            } else {
                out.iter_mut()
                    .enumerate()
                    .for_each(|(idx, slot)| compute(idx, slot));
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = use_parallel;
            out.iter_mut()
                .enumerate()
                .for_each(|(idx, slot)| compute(idx, slot));
        }

        let t = Tensor3 {
            shape: out_shape,
            data: out,
        };
        t.ensure_finite("axis_matmul")?;
        Ok(t)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add",
                format!("shapes differ: {:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data: Vec<T> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        let t = Tensor3 {
            shape: self.shape,
            data,
        };
        t.ensure_finite("add")?;
        Ok(t)
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Result<Self> {
        let data = map_elems(&self.data, f);
        let t = Tensor3 {
            shape: self.shape,
            data,
        };
        t.ensure_finite("map")?;
        Ok(t)
    }

    pub(crate) fn from_raw_unchecked(shape: Shape3, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor3 { shape, data }
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }
}

/// Elementwise map over a flat buffer, parallel above the work threshold.
pub(crate) fn map_elems<T: Scalar>(src: &[T], f: impl Fn(T) -> T + Sync) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if src.len() >= PARALLEL_WORK_THRESHOLD {
            return src.par_iter().map(|&v| f(v)).collect();
        }
    }
    src.iter().map(|&v| f(v)).collect()
}

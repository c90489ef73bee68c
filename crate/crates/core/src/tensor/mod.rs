//! Dense rank-4 feature blocks and the handful of differentiable operations
//! the adapters are built from.
//!
//! Memory order is channel-major: `((c * T + t) * H + h) * W + w`. Every
//! operation in [`ops`] has a matching `*_backward` that accumulates parameter
//! gradients into [`ParamTensor::grad`] and returns the input gradient.

pub mod io;
pub mod ops;

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Extents of a [`Tensor4`] in (channels, time, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims4 {
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub const fn new(c: usize, t: usize, h: usize, w: usize) -> Self {
        Self { c, t, h, w }
    }

    /// Number of (t, h, w) positions per channel.
    pub const fn plane(&self) -> usize {
        self.t * self.h * self.w
    }

    pub const fn len(&self) -> usize {
        self.c * self.plane()
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub fn same_extent(&self, other: &Dims4) -> bool {
        self.t == other.t && self.h == other.h && self.w == other.w
    }
}

impl fmt::Display for Dims4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.c, self.t, self.h, self.w)
    }
}

/// A dense (C, T, H, W) block of `f64` values.
///
/// T, H and W are always at least one. A zero channel count is allowed so that
/// a channel split at ratio 0 or 1 can produce an empty side.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: Dims4,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: Dims4) -> Self {
        assert!(
            dims.t >= 1 && dims.h >= 1 && dims.w >= 1,
            "tensor extent must be positive, got {dims}"
        );
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims4, value: f64) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(value);
        t
    }

    pub fn from_vec(dims: Dims4, data: Vec<f64>) -> Result<Self> {
        if dims.t == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::Config(format!(
                "tensor extent must be positive, got {dims}"
            )));
        }
        if data.len() != dims.len() {
            return Err(Error::shape(
                "Tensor4::from_vec",
                format!("dims {dims} ({} values)", dims.len()),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims4, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(dims);
        let mut i = 0;
        for c in 0..dims.c {
            for t in 0..dims.t {
                for h in 0..dims.h {
                    for w in 0..dims.w {
                        out.data[i] = f(c, t, h, w);
                        i += 1;
                    }
                }
            }
        }
        out
    }

    pub fn random_normal<R: Rng + ?Sized>(dims: Dims4, scale: f64, rng: &mut R) -> Self {
        let mut out = Self::zeros(dims);
        for v in &mut out.data {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
        out
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, h: usize, w: usize) -> usize {
        debug_assert!(c < self.dims.c && t < self.dims.t && h < self.dims.h && w < self.dims.w);
        ((c * self.dims.t + t) * self.dims.h + h) * self.dims.w + w
    }

    pub fn get(&self, c: usize, t: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, t, h, w)]
    }

    pub fn set(&mut self, c: usize, t: usize, h: usize, w: usize, value: f64) {
        let i = self.index(c, t, h, w);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.dims.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.dims.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape("add_assign", self.dims, other.dims));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A learnable parameter: its value and an accumulated gradient of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_values(shape: &[usize], value: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if value.len() != n {
            return Err(Error::shape(
                "ParamTensor::from_values",
                format!("shape {shape:?} ({n} values)"),
                format!("{} values", value.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            value,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            value: vec![v],
            grad: vec![0.0],
        }
    }

    pub fn random_normal<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for v in &mut p.value {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
        p
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn fill(&mut self, v: f64) {
        self.value.fill(v);
    }
}

/// Axis of a directional depthwise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Time,
    Height,
    Width,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Time, Axis::Height, Axis::Width];

    /// Decomposes a channel plane into `(outer, len, inner)` so that the
    /// axis runs over `len` with stride `inner`.
    pub(crate) fn layout(self, d: Dims4) -> (usize, usize, usize) {
        match self {
            Axis::Time => (1, d.t, d.h * d.w),
            Axis::Height => (d.t, d.h, d.w),
            Axis::Width => (d.t * d.h, d.w, 1),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Height => "height",
            Axis::Width => "width",
        })
    }
}

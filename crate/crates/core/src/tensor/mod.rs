//! Dense rank-4 tensors and the handful of kernels the two networks need.
//!
//! Values are stored as `f32` in `(n, c, h, w)` row-major order. Every
//! reduction and convolution accumulates in `f64` before storing back.

mod conv;
mod ops;

use std::fmt;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
pub(crate) use conv::conv2d_backward_impl;
pub use ops::{mse_loss, relu_backward, relu_forward};

use crate::error::{Error, Result};

/// Dimensions of a tensor: batch, channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in one batch item.
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, validating the length, dimensions and finiteness of
    /// `data`.
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
            return Err(Error::invalid(format!(
                "tensor dimensions must be positive, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite tensor value at {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        assert!(!shape.is_empty(), "tensor dimensions must be positive");
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        assert!(value.is_finite());
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut t = Tensor::zeros(shape);
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        let v = f(n, c, y, x);
                        assert!(v.is_finite(), "non-finite value from generator");
                        t.data[shape.index(n, c, y, x)] = v;
                    }
                }
            }
        }
        t
    }

    /// Internal constructor for kernels that have already established the
    /// invariants.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    /// Converts `f64` accumulators back to storage precision, rejecting
    /// values that overflow `f32`.
    pub(crate) fn from_f64(shape: Shape, acc: &[f64], op: &str) -> Result<Self> {
        let data: Vec<f32> = acc.iter().map(|&v| v as f32).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{op} produced non-finite values")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the values. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.shape.index(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        assert!(value.is_finite());
        let i = self.shape.index(n, c, y, x);
        self.data[i] = value;
    }

    /// Values of batch item `n`.
    pub fn item(&self, n: usize) -> &[f32] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.shape.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Stacks single-item tensors of identical shape along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?
            .shape;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            let s = t.shape;
            if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
                return Err(shape_mismatch("stack", first, s));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor::from_parts(Shape::new(n, first.c, first.h, first.w), data))
    }

    /// Channel slice `[start, end)` of every batch item.
    pub fn channels(&self, start: usize, end: usize) -> Result<Self> {
        let s = self.shape;
        if start >= end || end > s.c {
            return Err(Error::invalid(format!(
                "channel range {start}..{end} out of bounds for {s}"
            )));
        }
        let plane = s.plane_len();
        let out_shape = Shape::new(s.n, end - start, s.h, s.w);
        let mut data = Vec::with_capacity(out_shape.len());
        for n in 0..s.n {
            let item = self.item(n);
            data.extend_from_slice(&item[start * plane..end * plane]);
        }
        Ok(Tensor::from_parts(out_shape, data))
    }

    /// Concatenates two tensors along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Self> {
        let (a, b) = (self.shape, other.shape);
        if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
            return Err(shape_mismatch("concat_channels", a, b));
        }
        let out_shape = Shape::new(a.n, a.c + b.c, a.h, a.w);
        let mut data = Vec::with_capacity(out_shape.len());
        for n in 0..a.n {
            data.extend_from_slice(self.item(n));
            data.extend_from_slice(other.item(n));
        }
        Ok(Tensor::from_parts(out_shape, data))
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Tensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_mismatch("add", self.shape, other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_parts(self.shape, data))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_mismatch("max_abs_diff", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn shape_mismatch(op: &'static str, left: Shape, right: Shape) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.to_string(),
        right: right.to_string(),
    }
}

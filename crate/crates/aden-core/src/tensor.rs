//! Dense rank-3 value storage shared by the autodiff graph and the model.
//!
//! Every array in the crate is `(batch, channels, length)`, stored
//! row-major as one contiguous `Vec<f64>`. Convolution kernels reuse the
//! same layout as `(out_channels, in_channels, kernel)` and dense weights
//! as `(1, out_features, in_features)`.

use crate::error::{Error, Result};

/// Shape of a rank-3 array: `(batch, channels, length)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, len: usize) -> Self {
        Shape { batch, channels, len }
    }

    /// Shape of a scalar node (reductions produce this).
    pub fn scalar() -> Self {
        Shape::new(1, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.len
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.channels == 0 || self.len == 0 {
            return Err(Error::Shape(format!("all dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.batch, self.channels, self.len)
    }
}

/// Dense rank-3 array of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.numel()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// A `(1, 1, n)` tensor from a flat slice, the common case for
    /// one-channel signals.
    pub fn from_signal(values: &[f64]) -> Result<Self> {
        Tensor::from_vec(Shape::new(1, 1, values.len()), values.to_vec())
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Shape::scalar(), data: vec![value] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, t: usize) -> usize {
        (b * self.shape.channels + c) * self.shape.len + t
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> f64 {
        self.data[self.index(b, c, t)]
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.shape.is_scalar());
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

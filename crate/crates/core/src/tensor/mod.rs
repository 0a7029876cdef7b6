//! Dense double-precision tensors with tape-based reverse-mode
//! differentiation.
//!
//! The op set is exactly what the velocity network needs: 2D convolution
//! (including the 1x1 channel mix), linear layers, SiLU, channel concat,
//! nearest upsampling, unitary 2D FFT with a polar (magnitude/phase) split,
//! and a mean-squared-error loss.

mod adam;
mod conv;
mod spectral;
mod tape;

pub use adam::{adam_step, AdamState};
pub use spectral::{fft2, ifft2, polar, unpolar, MAGNITUDE_FLOOR};
pub use tape::{Tape, Var};

use crate::error::{Error, Result};

/// Row-major dense array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor; rejects length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("{n} values for shape {shape:?}"),
                data.len(),
            ));
        }
        check_finite(&data, "Tensor::new")?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Mutable access for optimizers and initializers; callers keep values
    /// finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape.as_slice() {
            &[b, c, h, w] => Ok([b, c, h, w]),
            s => Err(Error::shape(op, "rank-4 [B, C, H, W]", format!("{s:?}"))),
        }
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape.as_slice() {
            &[r, c] => Ok([r, c]),
            s => Err(Error::shape(op, "rank-2", format!("{s:?}"))),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Complex array with split real/imaginary buffers, produced by [`fft2`]
/// and consumed by [`ifft2`] or [`polar`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexField {
    pub fn new(shape: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::shape(
                "ComplexField::new",
                n,
                format!("re {} / im {}", re.len(), im.len()),
            ));
        }
        check_finite(&re, "ComplexField::new")?;
        check_finite(&im, "ComplexField::new")?;
        Ok(Self { shape, re, im })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// Real part as a tensor.
    pub fn real(&self) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.re.clone())
    }

    /// Euclidean norm of the imaginary part.
    pub fn imag_norm(&self) -> f64 {
        self.im.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_finite(data: &[f64], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

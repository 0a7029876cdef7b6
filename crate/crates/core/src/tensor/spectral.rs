//! Unitary 2D FFT over the trailing two axes and the polar split.
//!
//! Both directions are scaled by `1/sqrt(H*W)`, so the forward transform is
//! unitary and its adjoint is the inverse transform. This convention is
//! what the frequency-module 1x1 convolutions see; other conventions scale
//! the magnitude channel differently.

use std::f64::consts::PI;

use super::{ComplexField, Tensor};
use crate::error::{Error, Result};
use crate::fft::{check_pow2, Plan2};

/// Lower bound applied to `|f|` before dividing by it in the polar
/// backward pass.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

/// Phases closer than this to `-pi` are reported as `+pi`. Spectra of real
/// inputs carry exactly-real bins whose imaginary part is rounding noise of
/// either sign; pinning the branch cut just below the negative real axis
/// keeps their phase on one side.
const BRANCH_CUT_EPS: f64 = 1e-9;

fn plane_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape(op, "rank >= 2", format!("{shape:?}")));
    }
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    check_pow2(op, h)?;
    check_pow2(op, w)?;
    Ok((h, w))
}

/// Applies the unitary transform (or its inverse) to every trailing plane.
pub(crate) fn transform(
    shape: &[usize],
    re: &[f64],
    im: &[f64],
    inverse: bool,
) -> (Vec<f64>, Vec<f64>) {
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    let plane = h * w;
    let scale = 1.0 / (plane as f64).sqrt();
    let mut out_re = re.to_vec();
    let mut out_im = im.to_vec();
    let plan = Plan2::new(h, w);
    for (pr, pi) in out_re.chunks_mut(plane).zip(out_im.chunks_mut(plane)) {
        plan.run(pr, pi, inverse);
    }
    for v in out_re.iter_mut().chain(out_im.iter_mut()) {
        *v *= scale;
    }
    (out_re, out_im)
}

/// Unitary forward 2D FFT of a real tensor.
pub fn fft2(x: &Tensor) -> Result<ComplexField> {
    plane_dims(x.shape(), "fft2")?;
    let zeros = vec![0.0; x.numel()];
    let (re, im) = transform(x.shape(), x.data(), &zeros, false);
    Ok(ComplexField {
        shape: x.shape().to_vec(),
        re,
        im,
    })
}

/// Unitary inverse 2D FFT. The result is complex; its real part is the
/// spatial signal.
pub fn ifft2(f: &ComplexField) -> Result<ComplexField> {
    plane_dims(f.shape(), "ifft2")?;
    let (re, im) = transform(f.shape(), f.re(), f.im(), true);
    Ok(ComplexField {
        shape: f.shape().to_vec(),
        re,
        im,
    })
}

#[inline]
pub(crate) fn phase_of(re: f64, im: f64) -> f64 {
    let p = im.atan2(re);
    if p <= -PI + BRANCH_CUT_EPS {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Splits a complex field into magnitude and phase.
pub fn polar(f: &ComplexField) -> (Tensor, Tensor) {
    let mag = f
        .re
        .iter()
        .zip(&f.im)
        .map(|(r, i)| (r * r + i * i).sqrt())
        .collect();
    let phase = f
        .re
        .iter()
        .zip(&f.im)
        .map(|(&r, &i)| phase_of(r, i))
        .collect();
    (
        Tensor::from_parts(f.shape.clone(), mag),
        Tensor::from_parts(f.shape.clone(), phase),
    )
}

/// Recombines magnitude and phase into a complex field.
pub fn unpolar(magnitude: &Tensor, phase: &Tensor) -> Result<ComplexField> {
    if magnitude.shape() != phase.shape() {
        return Err(Error::shape(
            "unpolar",
            format!("{:?}", magnitude.shape()),
            format!("{:?}", phase.shape()),
        ));
    }
    let (re, im) = magnitude
        .data()
        .iter()
        .zip(phase.data())
        .map(|(&m, &p)| {
            let (s, c) = p.sin_cos();
            (m * c, m * s)
        })
        .unzip();
    Ok(ComplexField {
        shape: magnitude.shape().to_vec(),
        re,
        im,
    })
}

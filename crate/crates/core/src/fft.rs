//! Iterative radix-2 FFT on split real/imaginary buffers.
//!
//! These are the raw, unnormalized transforms (forward has no scale, inverse
//! has no scale either); callers apply whatever normalization they need.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub(crate) fn check_pow2(op: &'static str, n: usize) -> Result<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo { op, extent: n })
    }
}

/// Forward twiddles `exp(-2 pi i k / n)` for `k < n / 2`.
#[derive(Clone, Debug)]
pub(crate) struct Twiddles {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Twiddles {
    pub(crate) fn new(n: usize) -> Self {
        let (re, im) = (0..n / 2)
            .map(|k| {
                let (s, c) = (-2.0 * PI * k as f64 / n as f64).sin_cos();
                (c, s)
            })
            .unzip();
        Self { n, re, im }
    }
}

/// In-place 1D transform of length `re.len()` (must be a power of two).
/// `inverse` flips the twiddle sign.
pub fn fft_inplace(re: &mut [f64], im: &mut [f64], inverse: bool) {
    fft_with(re, im, inverse, &Twiddles::new(re.len()));
}

pub(crate) fn fft_with(re: &mut [f64], im: &mut [f64], inverse: bool, tw: &Twiddles) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert_eq!(n, tw.n);
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let sign = if inverse { -1.0 } else { 1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for k in 0..half {
            let wc = tw.re[k * stride];
            let ws = sign * tw.im[k * stride];
            let mut a = k;
            while a < n {
                let b = a + half;
                let tr = re[b] * wc - im[b] * ws;
                let ti = re[b] * ws + im[b] * wc;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                a += len;
            }
        }
        len <<= 1;
    }
}

/// In-place 2D transform of a row-major `height x width` plane.
pub fn fft2_inplace(re: &mut [f64], im: &mut [f64], height: usize, width: usize, inverse: bool) {
    let plan = Plan2::new(height, width);
    plan.run(re, im, inverse);
}

/// Twiddles for both axes of one plane size, reused across planes.
pub(crate) struct Plan2 {
    height: usize,
    width: usize,
    rows: Twiddles,
    cols: Twiddles,
}

impl Plan2 {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            rows: Twiddles::new(width),
            cols: Twiddles::new(height),
        }
    }

    pub(crate) fn run(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let (height, width) = (self.height, self.width);
        debug_assert_eq!(re.len(), height * width);
        for row in 0..height {
            let r = row * width..(row + 1) * width;
            fft_with(&mut re[r.clone()], &mut im[r], inverse, &self.rows);
        }
        let mut col_re = vec![0.0; height];
        let mut col_im = vec![0.0; height];
        for col in 0..width {
            for row in 0..height {
                col_re[row] = re[row * width + col];
                col_im[row] = im[row * width + col];
            }
            fft_with(&mut col_re, &mut col_im, inverse, &self.cols);
            for row in 0..height {
                re[row * width + col] = col_re[row];
                im[row * width + col] = col_im[row];
            }
        }
    }
}

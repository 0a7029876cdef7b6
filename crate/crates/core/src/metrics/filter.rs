//! Windowed filtering on row-major planes.

/// Reflects an out-of-range index with edge repetition
/// (`-1 -> 0`, `n -> n-1`), the "symmetric" boundary mode.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Normalized 1D Gaussian taps of odd length `len`.
pub(crate) fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= s;
    }
    taps
}

/// Separable correlation with symmetric padding; output has input extents.
pub(crate) fn separable_same(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    let mut padded = vec![0.0; w + taps.len() - 1];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect(i as isize - r, w)];
        }
        for (x, out) in tmp[y * w..(y + 1) * w].iter_mut().enumerate() {
            *out = taps.iter().zip(&padded[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - r, h);
            for (d, v) in dst.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *d += t * v;
            }
        }
    }
    out
}

/// Separable correlation keeping only fully-covered positions.
/// Returns the output plane and its extents.
pub(crate) fn separable_valid(
    src: &[f64],
    w: usize,
    h: usize,
    taps: &[f64],
) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + x + k])
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[(y + k) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

/// 3x3 correlation with symmetric padding.
pub(crate) fn correlate3x3(src: &[f64], w: usize, h: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in k.iter().enumerate() {
                let yy = reflect(y as isize + dy as isize - 1, h);
                for (dx, c) in row.iter().enumerate() {
                    let xx = reflect(x as isize + dx as isize - 1, w);
                    acc += c * src[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean over non-overlapping `f x f` blocks (trailing partial blocks are
/// dropped).
pub(crate) fn block_mean(src: &[f64], w: usize, h: usize, f: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / f, h / f);
    let inv = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    acc += src[(y * f + dy) * w + x * f + dx];
                }
            }
            out[y * ow + x] = acc * inv;
        }
    }
    (out, ow, oh)
}

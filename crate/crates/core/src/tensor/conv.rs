//! im2col + GEMM convolution kernels.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// 1x1, stride 1, no padding: the input plane already is the column
    /// matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// `c = a * b + beta * c` with optional transposed operands.
/// `a` is `m x k`, `b` is `k x n`, both row-major in their stored layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_transposed { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output columns `[lo, hi)` whose input column `ox * stride + k - pad` is
/// inside the image.
fn valid_cols(g: &ConvGeom, k: usize, ow: usize) -> (usize, usize) {
    let first = g.pad.saturating_sub(k).div_ceil(g.stride);
    let last = if g.w + g.pad > k {
        ((g.w + g.pad - k - 1) / g.stride + 1).min(ow)
    } else {
        0
    };
    (first.min(last), last)
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kx, ow);
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    if g.stride == 1 {
                        let start = lo + kx - g.pad;
                        line[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (ox, d) in line[lo..hi].iter_mut().enumerate() {
                            *d = src[(lo + ox) * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kx, ow);
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let s = &src[oy * ow..(oy + 1) * ow];
                    for ox in lo..hi {
                        line[ox * g.stride + kx - g.pad] += s[ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let kk = g.patch_len();
    let p = g.out_pixels();
    let in_len = g.cin * g.h * g.w;
    let mut y = vec![0.0; g.batch * g.cout * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; kk * p]
    };
    for b in 0..g.batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let yb = &mut y[b * g.cout * p..(b + 1) * g.cout * p];
        if let Some(bias) = bias {
            for (co, chunk) in yb.chunks_mut(p).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        if g.is_pointwise() {
            gemm(g.cout, kk, p, w, false, xb, false, beta, yb);
        } else {
            im2col(xb, g, &mut cols);
            gemm(g.cout, kk, p, w, false, &cols, false, beta, yb);
        }
    }
    y
}

/// Returns `(dx, dw, dbias)`.
pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let kk = g.patch_len();
    let p = g.out_pixels();
    let in_len = g.cin * g.h * g.w;
    let mut dw = vec![0.0; g.cout * kk];
    let mut db = vec![0.0; g.cout];
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut cols = vec![0.0; if g.is_pointwise() { 0 } else { kk * p }];
    let mut dcols = vec![0.0; kk * p];
    for b in 0..g.batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let dyb = &dy[b * g.cout * p..(b + 1) * g.cout * p];
        for (co, chunk) in dyb.chunks(p).enumerate() {
            db[co] += chunk.iter().sum::<f64>();
        }
        let col_src: &[f64] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, g, &mut cols);
            &cols
        };
        // dW += dY_b [cout x p] * cols^T [p x kk]
        gemm(g.cout, p, kk, dyb, false, col_src, true, 1.0, &mut dw);
        if let Some(dx) = dx.as_mut() {
            // dcols [kk x p] = W^T [kk x cout] * dY_b [cout x p]
            let dxb = &mut dx[b * in_len..(b + 1) * in_len];
            if g.is_pointwise() {
                gemm(kk, g.cout, p, w, true, dyb, false, 1.0, dxb);
            } else {
                gemm(kk, g.cout, p, w, true, dyb, false, 0.0, &mut dcols);
                col2im(&dcols, g, dxb);
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn strided_geometry() {
        let g = ConvGeom {
            batch: 1,
            cin: 1,
            h: 8,
            w: 8,
            cout: 1,
            kh: 3,
            kw: 3,
            stride: 2,
            pad: 1,
        };
        assert_eq!((g.out_h(), g.out_w()), (4, 4));
    }
}

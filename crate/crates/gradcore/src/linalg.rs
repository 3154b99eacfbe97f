//! Row-major GEMM and im2col helpers shared by the convolution and dense ops.

/// `c = a' · b' + beta · c` where `a'` is `m×k`, `b'` is `k×n` and a primed
/// operand is the stored matrix or its transpose. All storage is row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_trans: bool, b: &[f64], b_trans: bool, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

impl ConvGeom {
    /// 1×1 kernel, stride 1, no padding: the patch matrix is the image itself.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose input column `ow·stride + j − pad` is
    /// inside the image.
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = (self.pad.saturating_sub(j)).div_ceil(self.stride).min(self.wo);
        let hi = if self.w + self.pad > j { ((self.w + self.pad - j - 1) / self.stride + 1).min(self.wo) } else { 0 };
        (lo, hi.max(lo))
    }
}

/// Unfold one `[C,H,W]` image into a `[C·kh·kw, Ho·Wo]` patch matrix whose
/// rows are `ld` apart in `out`.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, out: &mut [f64], ld: usize) {
    let ncols = g.cols();
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut out[row * ld..row * ld + ncols];
                let (lo, hi) = g.valid_cols(j);
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + i) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + ih as usize) * g.w..][..g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    let first = lo * g.stride + j - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (k, v) in line[lo..hi].iter_mut().enumerate() {
                            *v = src[first + k * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back into an image.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64], ld: usize) {
    let ncols = g.cols();
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * ld..row * ld + ncols];
                let (lo, hi) = g.valid_cols(j);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + j - g.pad;
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + i) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + ih as usize) * g.w..][..g.w];
                    let line = &src[oh * g.wo + lo..oh * g.wo + hi];
                    for (k, v) in line.iter().enumerate() {
                        dst[first + k * g.stride] += v;
                    }
                }
            }
        }
    }
}

/// `[a, b, inner]` → `[b, a, inner]`.
pub(crate) fn swap_outer(src: &[f64], a: usize, b: usize, inner: usize, dst: &mut [f64]) {
    for i in 0..a {
        for j in 0..b {
            dst[(j * a + i) * inner..][..inner].copy_from_slice(&src[(i * b + j) * inner..][..inner]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_loops_with_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut expect = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                for t in 0..k {
                    expect[r * n + c] += a[r * k + t] * b[t * n + c];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, 0.0, &mut c);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
        // transpose both operands in storage
        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &at, true, &bt, true, 0.0, &mut c2);
        for (x, y) in c2.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

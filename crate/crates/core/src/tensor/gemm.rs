//! Dense matrix products and the patch (im2col) layout that turns the
//! multi-channel convolution operators into them.

use super::conv::{valid_range, ConvGeometry};
use super::Real;

/// `c += op(a) * op(b)` for row-major buffers, where `op(a)` is `m x k`
/// and `op(b)` is `k x n`. With `a_t`, `a` is stored as `k x m`; with
/// `b_t`, `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc<S: Real>(m: usize, k: usize, n: usize, a: &[S], a_t: bool, b: &[S], b_t: bool, c: &mut [S]) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe in-bounds row-major views of buffers
    // whose lengths were checked above, and `c` does not alias `a` or `b`.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Gathers the patches of a `[C, in_h, in_w]` map into `cols`, a
/// `(C * kh * kw) x (out_h * out_w)` matrix. Row `(c, ky, kx)`, column
/// `o` holds `input[c, o_y s + ky - pt, o_x s + kx - pl]`, or zero in the
/// padding.
pub fn im2col<S: Real>(input: &[S], channels: usize, g: &ConvGeometry, cols: &mut [S]) {
    let (large, small) = (g.large_len(), g.small_len());
    assert_eq!(input.len(), channels * large);
    assert_eq!(cols.len(), channels * g.kernel_len() * small);
    cols.fill(S::zero());
    let (s, pt, pl) = (g.stride, g.pad_top(), g.pad_left());
    for c in 0..channels {
        let plane = &input[c * large..(c + 1) * large];
        for ky in 0..g.kernel_h {
            let (y0, y1) = valid_range(ky, pt, s, g.in_h, g.out_h);
            for kx in 0..g.kernel_w {
                let (x0, x1) = valid_range(kx, pl, s, g.in_w, g.out_w);
                let row = (c * g.kernel_len() + ky * g.kernel_w + kx) * small;
                for oy in y0..y1 {
                    let src = &plane[(oy * s + ky - pt) * g.in_w..][..g.in_w];
                    let dst = &mut cols[row + oy * g.out_w..][..g.out_w];
                    for ox in x0..x1 {
                        dst[ox] = src[ox * s + kx - pl];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds every patch entry back onto
/// `out`, a `[C, in_h, in_w]` map.
pub fn col2im_acc<S: Real>(cols: &[S], channels: usize, g: &ConvGeometry, out: &mut [S]) {
    let (large, small) = (g.large_len(), g.small_len());
    assert_eq!(out.len(), channels * large);
    assert_eq!(cols.len(), channels * g.kernel_len() * small);
    let (s, pt, pl) = (g.stride, g.pad_top(), g.pad_left());
    for c in 0..channels {
        let plane = &mut out[c * large..(c + 1) * large];
        for ky in 0..g.kernel_h {
            let (y0, y1) = valid_range(ky, pt, s, g.in_h, g.out_h);
            for kx in 0..g.kernel_w {
                let (x0, x1) = valid_range(kx, pl, s, g.in_w, g.out_w);
                let row = (c * g.kernel_len() + ky * g.kernel_w + kx) * small;
                for oy in y0..y1 {
                    let src = &cols[row + oy * g.out_w..][..g.out_w];
                    let dst = &mut plane[(oy * s + ky - pt) * g.in_w..][..g.in_w];
                    for ox in x0..x1 {
                        dst[ox * s + kx - pl] += src[ox];
                    }
                }
            }
        }
    }
}

/// Scratch buffer reused across calls of the patch-based operators.
#[derive(Debug, Default, Clone)]
pub struct ConvScratch<S> {
    cols: Vec<S>,
}

impl<S: Real> ConvScratch<S> {
    pub fn new() -> Self {
        ConvScratch { cols: Vec::new() }
    }

    fn cols(&mut self, len: usize) -> &mut [S] {
        self.cols.resize(len, S::zero());
        &mut self.cols[..len]
    }
}

/// `out[j] += sum_i deconv(input[i], kernels[i][j])` for one sample;
/// `input` is `[ci, out_h, out_w]`, `kernels` `[ci, co, kh, kw]` and
/// `out` `[co, in_h, in_w]`.
pub fn deconv_multi_acc<S: Real>(
    input: &[S],
    kernels: &[S],
    ci: usize,
    co: usize,
    g: &ConvGeometry,
    out: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    let (rows, small) = (co * g.kernel_len(), g.small_len());
    let cols = scratch.cols(rows * small);
    cols.fill(S::zero());
    gemm_acc(rows, ci, small, kernels, true, input, false, cols);
    col2im_acc(cols, co, g, out);
}

/// `out[i] += sum_j conv(input[j], kernels[i][j])` for one sample; the
/// adjoint of [`deconv_multi_acc`].
pub fn conv_multi_acc<S: Real>(
    input: &[S],
    kernels: &[S],
    ci: usize,
    co: usize,
    g: &ConvGeometry,
    out: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    let (rows, small) = (co * g.kernel_len(), g.small_len());
    let cols = scratch.cols(rows * small);
    im2col(input, co, g, cols);
    gemm_acc(ci, rows, small, kernels, false, cols, false, out);
}

/// `kernel_out[i][j] += kernel_correlation(large[j], small[i])` for one
/// sample, the kernel derivative of `<large, deconv_multi(small, K)>`.
pub fn kernel_grad_multi_acc<S: Real>(
    small_maps: &[S],
    large_maps: &[S],
    ci: usize,
    co: usize,
    g: &ConvGeometry,
    kernel_out: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    let (rows, small) = (co * g.kernel_len(), g.small_len());
    let cols = scratch.cols(rows * small);
    im2col(large_maps, co, g, cols);
    gemm_acc(ci, small, rows, small_maps, false, cols, true, kernel_out);
}

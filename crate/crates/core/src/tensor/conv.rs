use super::{Real, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
}

/// Geometry of a Same-padded strided 2-D convolution.
///
/// `in_*` is the large side (convolution input, transposed-convolution
/// output) and `out_*` the small side. With stride `s`, `out = ceil(in / s)`
/// and the total padding per axis is `max((out - 1) * s + k - in, 0)`, of
/// which `floor(pad / 2)` goes before the first element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn same(in_h: usize, in_w: usize, kernel_h: usize, kernel_w: usize, stride: usize) -> Result<Self> {
        if stride < 1 {
            return Err(TensorError::InvalidStride(stride));
        }
        if kernel_h == 0 || kernel_w == 0 {
            return Err(TensorError::InvalidKernel(kernel_h, kernel_w));
        }
        Ok(ConvGeometry {
            kernel_h,
            kernel_w,
            stride,
            padding: Padding::Same,
            in_h,
            in_w,
            out_h: in_h.div_ceil(stride),
            out_w: in_w.div_ceil(stride),
        })
    }

    /// Geometry whose transposed convolution maps a `small_h x small_w` map
    /// to `small_h * s x small_w * s`.
    pub fn same_transposed(
        small_h: usize,
        small_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    ) -> Result<Self> {
        ConvGeometry::same(small_h * stride, small_w * stride, kernel_h, kernel_w, stride)
    }

    fn total_pad(out: usize, input: usize, k: usize, s: usize) -> usize {
        if out == 0 {
            return 0;
        }
        ((out - 1) * s + k).saturating_sub(input)
    }

    pub fn pad_h(&self) -> usize {
        Self::total_pad(self.out_h, self.in_h, self.kernel_h, self.stride)
    }

    pub fn pad_w(&self) -> usize {
        Self::total_pad(self.out_w, self.in_w, self.kernel_w, self.stride)
    }

    pub fn pad_top(&self) -> usize {
        self.pad_h() / 2
    }

    pub fn pad_left(&self) -> usize {
        self.pad_w() / 2
    }

    pub fn large_len(&self) -> usize {
        self.in_h * self.in_w
    }

    pub fn small_len(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_h * self.kernel_w
    }
}

/// Range of small-side indices `o` with `0 <= o*s + k - pad < n_large`.
#[inline]
pub(crate) fn valid_range(k: usize, pad: usize, s: usize, n_large: usize, n_small: usize) -> (usize, usize) {
    let start = if pad > k { (pad - k).div_ceil(s) } else { 0 };
    let hi = n_large + pad;
    if hi <= k {
        return (0, 0);
    }
    let end = ((hi - 1 - k) / s + 1).min(n_small);
    (start.min(end), end)
}

/// `out += conv(input, kernel)`; `input` is large, `out` small.
pub fn conv2d_acc<S: Real>(input: &[S], kernel: &[S], g: &ConvGeometry, out: &mut [S]) {
    debug_assert_eq!(input.len(), g.large_len());
    debug_assert_eq!(out.len(), g.small_len());
    debug_assert_eq!(kernel.len(), g.kernel_len());
    let (s, pt, pl) = (g.stride, g.pad_top(), g.pad_left());
    for ky in 0..g.kernel_h {
        let (y0, y1) = valid_range(ky, pt, s, g.in_h, g.out_h);
        for kx in 0..g.kernel_w {
            let w = kernel[ky * g.kernel_w + kx];
            let (x0, x1) = valid_range(kx, pl, s, g.in_w, g.out_w);
            for oy in y0..y1 {
                let iy = oy * s + ky - pt;
                let in_row = &input[iy * g.in_w..(iy + 1) * g.in_w];
                let out_row = &mut out[oy * g.out_w..(oy + 1) * g.out_w];
                for ox in x0..x1 {
                    out_row[ox] += w * in_row[ox * s + kx - pl];
                }
            }
        }
    }
}

/// `out += deconv(input, kernel)`; `input` is small, `out` large. Exact
/// adjoint of [`conv2d_acc`].
pub fn deconv2d_acc<S: Real>(input: &[S], kernel: &[S], g: &ConvGeometry, out: &mut [S]) {
    debug_assert_eq!(input.len(), g.small_len());
    debug_assert_eq!(out.len(), g.large_len());
    debug_assert_eq!(kernel.len(), g.kernel_len());
    let (s, pt, pl) = (g.stride, g.pad_top(), g.pad_left());
    for ky in 0..g.kernel_h {
        let (y0, y1) = valid_range(ky, pt, s, g.in_h, g.out_h);
        for kx in 0..g.kernel_w {
            let w = kernel[ky * g.kernel_w + kx];
            let (x0, x1) = valid_range(kx, pl, s, g.in_w, g.out_w);
            for oy in y0..y1 {
                let iy = oy * s + ky - pt;
                let in_row = &input[oy * g.out_w..(oy + 1) * g.out_w];
                let out_row = &mut out[iy * g.in_w..(iy + 1) * g.in_w];
                for ox in x0..x1 {
                    out_row[ox * s + kx - pl] += w * in_row[ox];
                }
            }
        }
    }
}

/// `kernel_out[k] += sum_o small[o] * large[o*s + k - pad]`.
///
/// This is the stride-1 correlation of `large` with `Dilate(small, s)`, i.e.
/// the derivative of `<large, deconv(small, K)>` with respect to `K`.
pub fn kernel_correlation_acc<S: Real>(large: &[S], small: &[S], g: &ConvGeometry, kernel_out: &mut [S]) {
    debug_assert_eq!(large.len(), g.large_len());
    debug_assert_eq!(small.len(), g.small_len());
    debug_assert_eq!(kernel_out.len(), g.kernel_len());
    let (s, pt, pl) = (g.stride, g.pad_top(), g.pad_left());
    for ky in 0..g.kernel_h {
        let (y0, y1) = valid_range(ky, pt, s, g.in_h, g.out_h);
        for kx in 0..g.kernel_w {
            let (x0, x1) = valid_range(kx, pl, s, g.in_w, g.out_w);
            let mut acc = S::zero();
            for oy in y0..y1 {
                let iy = oy * s + ky - pt;
                let l_row = &large[iy * g.in_w..(iy + 1) * g.in_w];
                let s_row = &small[oy * g.out_w..(oy + 1) * g.out_w];
                for ox in x0..x1 {
                    acc += s_row[ox] * l_row[ox * s + kx - pl];
                }
            }
            kernel_out[ky * g.kernel_w + kx] += acc;
        }
    }
}

fn expect_2d<S: Real>(t: &Tensor<S>, op: &'static str, h: usize, w: usize) -> Result<()> {
    if t.rank() != 2 {
        return Err(TensorError::Rank {
            op,
            expected: 2,
            actual: t.rank(),
        });
    }
    for (axis, (&got, want)) in t.shape().iter().zip([h, w]).enumerate() {
        if got != want {
            return Err(TensorError::AxisMismatch {
                op,
                axis,
                expected: want,
                actual: got,
            });
        }
    }
    Ok(())
}

fn expect_shape<S: Real>(t: &Tensor<S>, op: &'static str, want: &[usize]) -> Result<()> {
    if t.rank() != want.len() {
        return Err(TensorError::Rank {
            op,
            expected: want.len(),
            actual: t.rank(),
        });
    }
    for (axis, (&got, &w)) in t.shape().iter().zip(want).enumerate() {
        if got != w {
            return Err(TensorError::AxisMismatch {
                op,
                axis,
                expected: w,
                actual: got,
            });
        }
    }
    Ok(())
}

/// Single-channel strided correlation, `[in_h, in_w] -> [out_h, out_w]`.
pub fn conv2d<S: Real>(input: &Tensor<S>, kernel: &Tensor<S>, geom: &ConvGeometry) -> Result<Tensor<S>> {
    expect_2d(input, "conv2d input", geom.in_h, geom.in_w)?;
    expect_2d(kernel, "conv2d kernel", geom.kernel_h, geom.kernel_w)?;
    let mut out = Tensor::zeros(&[geom.out_h, geom.out_w]);
    conv2d_acc(input.data(), kernel.data(), geom, out.data_mut());
    Ok(out)
}

/// Single-channel transposed convolution, `[out_h, out_w] -> [in_h, in_w]`.
pub fn deconv2d<S: Real>(input: &Tensor<S>, kernel: &Tensor<S>, geom: &ConvGeometry) -> Result<Tensor<S>> {
    expect_2d(input, "deconv2d input", geom.out_h, geom.out_w)?;
    expect_2d(kernel, "deconv2d kernel", geom.kernel_h, geom.kernel_w)?;
    let mut out = Tensor::zeros(&[geom.in_h, geom.in_w]);
    deconv2d_acc(input.data(), kernel.data(), geom, out.data_mut());
    Ok(out)
}

/// Multi-channel transposed convolution.
///
/// `input` is `[ci, out_h, out_w]`, `kernels` is `[ci, co, kh, kw]`; output
/// channel `j` is `sum_i deconv(input_i, kernels[i][j])`.
pub fn deconv2d_multi<S: Real>(input: &Tensor<S>, kernels: &Tensor<S>, geom: &ConvGeometry) -> Result<Tensor<S>> {
    if kernels.rank() != 4 {
        return Err(TensorError::Rank {
            op: "deconv2d_multi kernels",
            expected: 4,
            actual: kernels.rank(),
        });
    }
    let (ci, co) = (kernels.shape()[0], kernels.shape()[1]);
    expect_shape(
        kernels,
        "deconv2d_multi kernels",
        &[ci, co, geom.kernel_h, geom.kernel_w],
    )?;
    expect_shape(input, "deconv2d_multi input", &[ci, geom.out_h, geom.out_w])?;
    let mut out = Tensor::zeros(&[co, geom.in_h, geom.in_w]);
    let kl = geom.kernel_len();
    for i in 0..ci {
        let src = input.slab(i);
        for j in 0..co {
            let k = &kernels.data()[(i * co + j) * kl..(i * co + j + 1) * kl];
            deconv2d_acc(src, k, geom, out.slab_mut(j));
        }
    }
    Ok(out)
}

/// Multi-channel strided correlation, adjoint of [`deconv2d_multi`].
///
/// `input` is `[co, in_h, in_w]`, `kernels` is `[ci, co, kh, kw]`; output
/// channel `i` is `sum_j conv(input_j, kernels[i][j])`.
pub fn conv2d_multi<S: Real>(input: &Tensor<S>, kernels: &Tensor<S>, geom: &ConvGeometry) -> Result<Tensor<S>> {
    if kernels.rank() != 4 {
        return Err(TensorError::Rank {
            op: "conv2d_multi kernels",
            expected: 4,
            actual: kernels.rank(),
        });
    }
    let (ci, co) = (kernels.shape()[0], kernels.shape()[1]);
    expect_shape(kernels, "conv2d_multi kernels", &[ci, co, geom.kernel_h, geom.kernel_w])?;
    expect_shape(input, "conv2d_multi input", &[co, geom.in_h, geom.in_w])?;
    let mut out = Tensor::zeros(&[ci, geom.out_h, geom.out_w]);
    let kl = geom.kernel_len();
    for i in 0..ci {
        for j in 0..co {
            let k = &kernels.data()[(i * co + j) * kl..(i * co + j + 1) * kl];
            conv2d_acc(input.slab(j), k, geom, out.slab_mut(i));
        }
    }
    Ok(out)
}

/// Inserts `s - 1` zeros between neighbouring elements along both axes.
pub fn dilate<S: Real>(input: &Tensor<S>, s: usize) -> Result<Tensor<S>> {
    if s < 1 {
        return Err(TensorError::InvalidStride(s));
    }
    if input.rank() != 2 {
        return Err(TensorError::Rank {
            op: "dilate",
            expected: 2,
            actual: input.rank(),
        });
    }
    let (h, w) = (input.shape()[0], input.shape()[1]);
    if h == 0 || w == 0 {
        return Ok(input.clone());
    }
    let (dh, dw) = ((h - 1) * s + 1, (w - 1) * s + 1);
    let mut out = Tensor::zeros(&[dh, dw]);
    for y in 0..h {
        for x in 0..w {
            out.data_mut()[y * s * dw + x * s] = input.data()[y * w + x];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the definition with explicit bounds checks.
    fn naive_conv(input: &Tensor<f64>, kernel: &Tensor<f64>, g: &ConvGeometry) -> Tensor<f64> {
        let (pt, pl) = (g.pad_top() as isize, g.pad_left() as isize);
        let mut out = Tensor::zeros(&[g.out_h, g.out_w]);
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = 0.0;
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let iy = (oy * g.stride + ky) as isize - pt;
                        let ix = (ox * g.stride + kx) as isize - pl;
                        if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                            acc += input.get(&[iy as usize, ix as usize]) * kernel.get(&[ky, kx]);
                        }
                    }
                }
                out.set(&[oy, ox], acc);
            }
        }
        out
    }

    #[test]
    fn same_geometry_extents() {
        let g = ConvGeometry::same(32, 32, 3, 3, 2).unwrap();
        assert_eq!((g.out_h, g.out_w), (16, 16));
        assert_eq!((g.pad_h(), g.pad_top()), (1, 0));
        let g = ConvGeometry::same(5, 7, 3, 3, 1).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top(), g.pad_left()), (5, 7, 1, 1));
        let g = ConvGeometry::same(5, 5, 3, 3, 2).unwrap();
        assert_eq!((g.out_h, g.pad_h(), g.pad_top()), (3, 2, 1));
        assert_eq!(ConvGeometry::same(4, 4, 3, 3, 0), Err(TensorError::InvalidStride(0)));
        let t = ConvGeometry::same_transposed(2, 2, 3, 3, 2).unwrap();
        assert_eq!((t.in_h, t.in_w), (4, 4));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let g = ConvGeometry::same(6, 6, 3, 3, 2).unwrap();
        let k = Tensor::from_fn(&[3, 3], |i| i as f64 - 3.5);
        let y = conv2d(&Tensor::zeros(&[6, 6]), &k, &g).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let y = deconv2d(&Tensor::zeros(&[3, 3]), &k, &g).unwrap();
        assert_eq!(y.shape(), &[6, 6]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_kernel_stride_one_is_identity() {
        let g = ConvGeometry::same(4, 5, 1, 1, 1).unwrap();
        let x = Tensor::from_fn(&[4, 5], |i| (i * i) as f64 * 0.25);
        let k = Tensor::full(&[1, 1], 1.0);
        assert_eq!(conv2d(&x, &k, &g).unwrap(), x);
        assert_eq!(deconv2d(&x, &k, &g).unwrap(), x);
    }

    #[test]
    fn ramp_with_ones_kernel_stride_two() {
        // ramp 0..16 over a 4x4 grid; pad total 1, split (0, 1); values
        // computed with the nested-loop reference.
        let g = ConvGeometry::same(4, 4, 3, 3, 2).unwrap();
        let x = Tensor::from_fn(&[4, 4], |i| i as f64);
        let k = Tensor::full(&[3, 3], 1.0);
        let y = conv2d(&x, &k, &g).unwrap();
        let oracle = naive_conv(&x, &k, &g);
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y, oracle);
        assert_eq!(y.data(), &[45.0, 39.0, 66.0, 50.0]);
    }

    #[test]
    fn deconv_two_by_two_to_four_by_four() {
        let g = ConvGeometry::same_transposed(2, 2, 3, 3, 2).unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::from_fn(&[3, 3], |i| i as f64 + 1.0);
        let y = deconv2d(&x, &k, &g).unwrap();
        assert_eq!(y.shape(), &[4, 4]);
    }

    #[test]
    fn conv_reports_offending_axis() {
        let g = ConvGeometry::same(4, 4, 3, 3, 2).unwrap();
        let err = conv2d(&Tensor::<f64>::zeros(&[4, 5]), &Tensor::zeros(&[3, 3]), &g).unwrap_err();
        assert_eq!(
            err,
            TensorError::AxisMismatch {
                op: "conv2d input",
                axis: 1,
                expected: 4,
                actual: 5
            }
        );
        assert!(deconv2d(&Tensor::<f64>::zeros(&[2, 2]), &Tensor::zeros(&[3, 2]), &g).is_err());
    }

    #[test]
    fn dilate_definition() {
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = dilate(&x, 2).unwrap();
        assert_eq!(d.shape(), &[3, 3]);
        assert_eq!(d.data(), &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 4.0]);
        assert_eq!(dilate(&x, 1).unwrap(), x);
        assert_eq!(dilate(&x, 0), Err(TensorError::InvalidStride(0)));
    }

    #[test]
    fn valid_range_matches_bounds_scan() {
        for s in 1usize..4 {
            for k in 0..5 {
                for pad in 0..4 {
                    for n_large in 1usize..9 {
                        let n_small = n_large.div_ceil(s);
                        let expect: Vec<usize> = (0..n_small)
                            .filter(|&o| {
                                let p = (o * s + k) as isize - pad as isize;
                                p >= 0 && (p as usize) < n_large
                            })
                            .collect();
                        let (a, b) = valid_range(k, pad, s, n_large, n_small);
                        assert_eq!((a..b).collect::<Vec<_>>(), expect, "s={s} k={k} pad={pad} n={n_large}");
                    }
                }
            }
        }
    }
}

//! Slow, literal reference computations for tests.
//!
//! Nothing here calls into `convngc`; every routine works on plain
//! `Vec<f64>` buffers and evaluates the defining formula directly.

/// A `[rows, cols]` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Map {
    pub fn zeros(h: usize, w: usize) -> Self {
        Map {
            h,
            w,
            v: vec![0.0; h * w],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.v[y * self.w + x]
    }
}

/// Same padding before the first element for one axis.
pub fn same_pad_low(input: usize, kernel: usize, stride: usize) -> usize {
    let out = input.div_ceil(stride);
    let needed = (out as isize - 1) * stride as isize + kernel as isize - input as isize;
    (needed.max(0) as usize) / 2
}

/// Quadruple-loop strided correlation with Same padding.
pub fn conv2d(input: &Map, kernel: &Map, stride: usize) -> Map {
    let oh = input.h.div_ceil(stride);
    let ow = input.w.div_ceil(stride);
    let pt = same_pad_low(input.h, kernel.h, stride) as isize;
    let pl = same_pad_low(input.w, kernel.w, stride) as isize;
    let mut out = Map::zeros(oh, ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for ky in 0..kernel.h {
                for kx in 0..kernel.w {
                    let iy = (oy * stride + ky) as isize - pt;
                    let ix = (ox * stride + kx) as isize - pl;
                    if iy < 0 || ix < 0 || iy >= input.h as isize || ix >= input.w as isize {
                        continue;
                    }
                    acc += input.at(iy as usize, ix as usize) * kernel.at(ky, kx);
                }
            }
            out.v[oy * ow + ox] = acc;
        }
    }
    out
}

/// Dense matrix of the strided convolution acting on flattened
/// `in_h x in_w` maps, built column by column from unit impulses.
pub fn conv_matrix(in_h: usize, in_w: usize, kernel: &Map, stride: usize) -> (usize, usize, Vec<f64>) {
    let n_in = in_h * in_w;
    let mut probe = Map::zeros(in_h, in_w);
    let first = conv2d(&probe, kernel, stride);
    let n_out = first.v.len();
    let mut m = vec![0.0; n_out * n_in];
    for col in 0..n_in {
        probe.v.iter_mut().for_each(|v| *v = 0.0);
        probe.v[col] = 1.0;
        let y = conv2d(&probe, kernel, stride);
        for row in 0..n_out {
            m[row * n_in + col] = y.v[row];
        }
    }
    (n_out, n_in, m)
}

/// Transposed convolution as the transpose of [`conv_matrix`]: maps an
/// `out_h x out_w` map to `in_h x in_w`.
pub fn deconv2d(input: &Map, kernel: &Map, stride: usize, in_h: usize, in_w: usize) -> Map {
    let (n_out, n_in, m) = conv_matrix(in_h, in_w, kernel, stride);
    assert_eq!(n_out, input.v.len(), "deconv input does not match geometry");
    let mut out = Map::zeros(in_h, in_w);
    for row in 0..n_out {
        for col in 0..n_in {
            out.v[col] += m[row * n_in + col] * input.v[row];
        }
    }
    out
}

/// Transposed convolution by direct scatter: every input element stamps
/// the kernel at `o * s - pad_low` of an `in_h x in_w` output.
pub fn deconv2d_scatter(input: &Map, kernel: &Map, stride: usize, in_h: usize, in_w: usize) -> Map {
    let pt = same_pad_low(in_h, kernel.h, stride) as isize;
    let pl = same_pad_low(in_w, kernel.w, stride) as isize;
    let mut out = Map::zeros(in_h, in_w);
    for oy in 0..input.h {
        for ox in 0..input.w {
            for ky in 0..kernel.h {
                for kx in 0..kernel.w {
                    let y = (oy * stride + ky) as isize - pt;
                    let x = (ox * stride + kx) as isize - pl;
                    if y >= 0 && x >= 0 && y < in_h as isize && x < in_w as isize {
                        out.v[y as usize * in_w + x as usize] += input.at(oy, ox) * kernel.at(ky, kx);
                    }
                }
            }
        }
    }
    out
}

/// Zero insertion between neighbouring elements.
pub fn dilate(input: &Map, s: usize) -> Map {
    let (h, w) = ((input.h - 1) * s + 1, (input.w - 1) * s + 1);
    let mut out = Map::zeros(h, w);
    for y in 0..input.h {
        for x in 0..input.w {
            out.v[y * s * w + x * s] = input.at(y, x);
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Layered network description for the energy oracle. Index 0 is the
/// bottom layer.
#[derive(Debug, Clone)]
pub struct Net {
    /// `(channels, height, width)` per layer.
    pub layers: Vec<(usize, usize, usize)>,
    pub stride: usize,
    pub kernel: usize,
    /// `kernels[l - 1][(i * C_{l-1} + j) * k * k ..]` is kernel `[i][j]` of layer `l`.
    pub kernels: Vec<Vec<f64>>,
    /// Negative slope of the state activation; `None` for identity.
    pub leaky_slope: Option<f64>,
}

impl Net {
    fn phi(&self, x: f64) -> f64 {
        match self.leaky_slope {
            Some(s) => leaky(x, s),
            None => x,
        }
    }

    /// Prediction of layer `l - 1` from the flat state of layer `l`
    /// (identity output activation, no bias).
    pub fn predict(&self, l: usize, z_up: &[f64]) -> Vec<f64> {
        let (ci, h, w) = self.layers[l];
        let (co, bh, bw) = self.layers[l - 1];
        let kk = self.kernel * self.kernel;
        let mut out = vec![0.0; co * bh * bw];
        for i in 0..ci {
            let src = Map {
                h,
                w,
                v: z_up[i * h * w..(i + 1) * h * w].iter().map(|&x| self.phi(x)).collect(),
            };
            for j in 0..co {
                let k = Map {
                    h: self.kernel,
                    w: self.kernel,
                    v: self.kernels[l - 1][(i * co + j) * kk..(i * co + j + 1) * kk].to_vec(),
                };
                let y = deconv2d_scatter(&src, &k, self.stride, bh, bw);
                for (o, v) in out[j * bh * bw..(j + 1) * bh * bw].iter_mut().zip(&y.v) {
                    *o += v;
                }
            }
        }
        out
    }

    /// `sum_{l < L} 1/2 ||z^l - pred(z^{l+1})||^2` for one sample.
    pub fn energy(&self, z: &[Vec<f64>]) -> f64 {
        let mut e = 0.0;
        for l in 1..self.layers.len() {
            let p = self.predict(l, &z[l]);
            e += 0.5 * z[l - 1].iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        e
    }
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn central_gradient(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// `||a - b|| / max(||b||, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Textbook Adam on a single scalar.
pub fn scalar_adam(mut p: f64, grads: &[f64], alpha: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v) = (0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32 + 1));
        let vh = v / (1.0 - b2.powi(t as i32 + 1));
        p -= alpha * mh / (vh.sqrt() + eps);
    }
    p
}

/// Image metrics on `[C, H, W]` buffers already on the 0-255 scale.
pub mod metrics {
    fn channels(x: &[f64], c: usize) -> Vec<&[f64]> {
        let n = x.len() / c;
        (0..c).map(|k| &x[k * n..(k + 1) * n]).collect()
    }

    pub fn mse(x: &[f64], y: &[f64], c: usize) -> f64 {
        let mut total = 0.0;
        for (a, b) in channels(x, c).into_iter().zip(channels(y, c)) {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (b[i] - a[i]) * (b[i] - a[i]);
            }
            total += s / a.len() as f64;
        }
        total / c as f64
    }

    pub fn ssim(x: &[f64], y: &[f64], c: usize, q: f64) -> f64 {
        let (c1, c2) = ((0.01 * q) * (0.01 * q), (0.03 * q) * (0.03 * q));
        let mut total = 0.0;
        for (a, b) in channels(x, c).into_iter().zip(channels(y, c)) {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for i in 0..a.len() {
                va += (a[i] - ma) * (a[i] - ma);
                vb += (b[i] - mb) * (b[i] - mb);
                cov += (a[i] - ma) * (b[i] - mb);
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total / c as f64
    }

    pub fn psnr(x: &[f64], y: &[f64], c: usize) -> f64 {
        let mut total = 0.0;
        for (a, b) in channels(x, c).into_iter().zip(channels(y, c)) {
            let m = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
            total += 20.0 * (255.0 / m.sqrt()).log10();
        }
        total / c as f64
    }
}

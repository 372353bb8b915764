//! Dense row-major tensors and the structured linear operators used by the
//! generative model: strided convolution, its transpose, and dilation.

mod activation;
mod conv;
mod gemm;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use activation::{identity, leaky_relu, Activation, DEFAULT_LEAKY_SLOPE};
pub use conv::{
    conv2d, conv2d_acc, conv2d_multi, deconv2d, deconv2d_acc, deconv2d_multi, dilate, kernel_correlation_acc,
    ConvGeometry, Padding,
};
pub use gemm::{col2im_acc, conv_multi_acc, deconv_multi_acc, gemm_acc, im2col, kernel_grad_multi_acc, ConvScratch};

/// Scalar type usable in tensors. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + Debug + Default + 'static
{
    fn from_f64_lossy(v: f64) -> Self;

    /// `C += A B` on strided views; see [`gemm_acc`] for the safe entry
    /// point.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must
    /// be in bounds, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch on axis {axis}: expected {expected}, got {actual}")]
    AxisMismatch {
        op: &'static str,
        axis: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: expected rank {expected}, got rank {actual}")]
    Rank {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("element count mismatch: shape needs {expected} elements, got {actual}")]
    ElementCount { expected: usize, actual: usize },
    #[error("stride must be at least 1, got {0}")]
    InvalidStride(usize),
    #[error("kernel extents must be positive, got {0}x{1}")]
    InvalidKernel(usize, usize),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense N-dimensional array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S = f64> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Row-major offset of a multi-index. Panics on out-of-range indices.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {i} out of range for extent {n}");
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: S) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Contiguous slab selected by fixing the leading axis.
    pub fn slab(&self, i: usize) -> &[S] {
        let inner = self.inner_len();
        &self.data[i * inner..(i + 1) * inner]
    }

    pub fn slab_mut(&mut self, i: usize) -> &mut [S] {
        let inner = self.inner_len();
        &mut self.data[i * inner..(i + 1) * inner]
    }

    fn inner_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    /// Column vector holding the elements in row-major order.
    pub fn flatten(&self) -> Tensor<S> {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    pub fn unflatten(v: &Tensor<S>, shape: &[usize]) -> Result<Tensor<S>> {
        if v.rank() != 1 {
            return Err(TensorError::Rank {
                op: "unflatten",
                expected: 1,
                actual: v.rank(),
            });
        }
        Tensor::from_vec(shape, v.data.clone())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Tensor<S>, op: &'static str) -> Result<()> {
        if self.rank() != other.rank() {
            return Err(TensorError::Rank {
                op,
                expected: self.rank(),
                actual: other.rank(),
            });
        }
        for (axis, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
            if a != b {
                return Err(TensorError::AxisMismatch {
                    op,
                    axis,
                    expected: a,
                    actual: b,
                });
            }
        }
        Ok(())
    }

    pub fn zip_with(&self, other: &Tensor<S>, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        self.check_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, alpha: S) -> Tensor<S> {
        self.map(|x| x * alpha)
    }

    pub fn add_scalar(&self, c: S) -> Tensor<S> {
        self.map(|x| x + c)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: S, other: &Tensor<S>) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor<S>) -> Result<S> {
        self.check_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn sum_squares(&self) -> S {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> S {
        self.sum_squares().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| T::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_is_row_major() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = t.flatten();
        assert_eq!(v.shape(), &[4]);
        assert_eq!(v.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.get(&[1, 0]), 3.0);
    }

    #[test]
    fn unflatten_rejects_wrong_count() {
        let v = Tensor::from_vec(&[5], vec![0.0; 5]).unwrap();
        let err = Tensor::unflatten(&v, &[2, 2]).unwrap_err();
        assert_eq!(err, TensorError::ElementCount { expected: 4, actual: 5 });
    }

    #[test]
    fn from_vec_checks_count() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn shape_mismatch_names_axis() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 4]);
        match a.add(&b).unwrap_err() {
            TensorError::AxisMismatch {
                axis, expected, actual, ..
            } => {
                assert_eq!((axis, expected, actual), (1, 3, 4));
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn dot_and_norm() {
        let a = Tensor::from_vec(&[3], vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.dot(&a).unwrap(), 25.0);
    }

    proptest::proptest! {
        #[test]
        fn flatten_round_trip(h in 1usize..6, w in 1usize..6, c in 1usize..4, seed in 0u64..1000) {
            let t = Tensor::from_fn(&[c, h, w], |i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 7.0);
            let back = Tensor::unflatten(&t.flatten(), t.shape()).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}

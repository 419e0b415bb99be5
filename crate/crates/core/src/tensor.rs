//! Dense row-major tensors and the GEMM entry point used by every layer.
//!
//! Feature maps are stored per sample in `(channels, height, width)` order.
//! Batches are plain `Vec`s of samples so that per-sample work can be spread
//! over a thread pool and reduced in a fixed order.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type usable by the network (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Raw strided matrix product `C = alpha * A * B + beta * C`.
    ///
    /// # Safety
    /// All pointers must be valid for the given dimensions and strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// A strided view of a matrix inside a slice.
#[derive(Clone, Copy, Debug)]
pub struct MatLayout {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl MatLayout {
    pub fn row_major(cols: usize) -> Self {
        MatLayout {
            offset: 0,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Layout of the transpose of a row-major `(rows x cols)` matrix.
    pub fn transposed(cols: usize) -> Self {
        MatLayout {
            offset: 0,
            row_stride: 1,
            col_stride: cols,
        }
    }

    pub fn at(self, offset: usize) -> Self {
        MatLayout { offset, ..self }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return self.offset;
        }
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// `C[m x n] = A[m x k] * B[k x n] + beta * C`, bounds-checked.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    la: MatLayout,
    b: &[T],
    lb: MatLayout,
    beta: T,
    c: &mut [T],
    lc: MatLayout,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || la.last_index(m, k) < a.len(), "gemm: A out of bounds");
    assert!(k == 0 || lb.last_index(k, n) < b.len(), "gemm: B out of bounds");
    assert!(lc.last_index(m, n) < c.len(), "gemm: C out of bounds");
    // SAFETY: every addressed element was bounds-checked above and `c` is
    // uniquely borrowed, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(la.offset),
            la.row_stride as isize,
            la.col_stride as isize,
            b.as_ptr().add(lb.offset),
            lb.row_stride as isize,
            lb.col_stride as isize,
            beta,
            c.as_mut_ptr().add(lc.offset),
            lc.row_stride as isize,
            lc.col_stride as isize,
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` of a rank-3 feature map.
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected a (C, H, W) tensor");
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    /// Channel-wise concatenation of two feature maps with equal spatial size.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let (ca, h, w) = a.chw();
        let (cb, hb, wb) = b.chw();
        assert_eq!((h, w), (hb, wb), "concat needs equal spatial size");
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor::from_vec(&[ca + cb, h, w], data)
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, first: usize) -> (Tensor<T>, Tensor<T>) {
        let (c, h, w) = self.chw();
        assert!(first <= c);
        let cut = first * h * w;
        (
            Tensor::from_vec(&[first, h, w], self.data[..cut].to_vec()),
            Tensor::from_vec(&[c - first, h, w], self.data[cut..].to_vec()),
        )
    }

    /// One channel plane of a `(C, H, W)` map.
    pub fn channel(&self, c: usize) -> &[T] {
        let (_, h, w) = self.chw();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product_with_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &a,
            MatLayout::row_major(k),
            &b,
            MatLayout::row_major(n),
            0.0,
            &mut c,
            MatLayout::row_major(n),
        );
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
        // A^T stored as (k x m) row-major.
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &at,
            MatLayout::transposed(m),
            &b,
            MatLayout::row_major(n),
            0.0,
            &mut c2,
            MatLayout::row_major(n),
        );
        assert_eq!(c, c2);
    }

    #[test]
    fn concat_then_split_is_identity() {
        let a = Tensor::<f32>::from_vec(&[2, 2, 2], (0..8).map(|v| v as f32).collect());
        let b = Tensor::<f32>::from_vec(&[1, 2, 2], vec![9.0, 8.0, 7.0, 6.0]);
        let c = Tensor::concat_channels(&a, &b);
        assert_eq!(c.shape(), &[3, 2, 2]);
        let (a2, b2) = c.split_channels(2);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}

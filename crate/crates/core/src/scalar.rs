//! Floating-point abstraction shared by every numeric module.
//!
//! All geometry, heatmap, loss and network code is written against [`Real`],
//! which is implemented for `f32` and `f64`. Gradient checks run in `f64`;
//! training defaults to `f32`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Tolerance used when validating unit vectors and similar invariants.
    const GEOM_TOL: f64;
    /// Short dtype tag written into checkpoints.
    const DTYPE: &'static str;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// General matrix multiply `C = alpha * A * B + beta * C` with explicit
    /// row/column strides, `A` being `m x k` and `B` being `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: MatRef<'_, Self>,
        b: MatRef<'_, Self>,
        beta: Self,
        c: MatMut<'_, Self>,
    );
}

/// Borrowed strided matrix view.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub row_stride: usize,
    pub col_stride: usize,
}

pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` view.
    pub fn row_major(data: &'a [T], cols: usize) -> Self {
        Self { data, row_stride: cols, col_stride: 1 }
    }

    /// Transposed view of a row-major `rows x cols` buffer (`cols x rows`).
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        Self { data, row_stride: 1, col_stride: cols }
    }
}

impl<'a, T> MatMut<'a, T> {
    pub fn row_major(data: &'a mut [T], cols: usize) -> Self {
        Self { data, row_stride: cols, col_stride: 1 }
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "matrix view out of bounds: last index {last}, len {len}");
}

macro_rules! impl_real {
    ($t:ty, $tol:expr, $tag:expr, $kernel:path) => {
        impl Real for $t {
            const GEOM_TOL: f64 = $tol;
            const DTYPE: &'static str = $tag;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: MatRef<'_, Self>,
                b: MatRef<'_, Self>,
                beta: Self,
                c: MatMut<'_, Self>,
            ) {
                check_extent(a.data.len(), m, k, a.row_stride, a.col_stride);
                check_extent(b.data.len(), k, n, b.row_stride, b.col_stride);
                check_extent(c.data.len(), m, n, c.row_stride, c.col_stride);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents of all three views were checked above and the
                // output borrow is exclusive.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.data.as_ptr(),
                        a.row_stride as isize,
                        a.col_stride as isize,
                        b.data.as_ptr(),
                        b.row_stride as isize,
                        b.col_stride as isize,
                        beta,
                        c.data.as_mut_ptr(),
                        c.row_stride as isize,
                        c.col_stride as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, 1e-5, "f32", matrixmultiply::sgemm);
impl_real!(f64, 1e-9, "f64", matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        f64::gemm(
            m,
            k,
            n,
            1.0,
            MatRef::row_major(&a, k),
            MatRef::row_major(&b, n),
            0.0,
            MatMut::row_major(&mut c, n),
        );
        for (x, y) in c.iter().zip(naive(m, k, n, &a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_transposed_view() {
        // A stored as k x m, used transposed.
        let (m, k, n) = (2, 3, 2);
        let at = vec![1.0f32, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = vec![1.0f32, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = vec![0.0f32; m * n];
        f32::gemm(
            m,
            k,
            n,
            1.0,
            MatRef::transposed(&at, m),
            MatRef::row_major(&b, n),
            0.0,
            MatMut::row_major(&mut c, n),
        );
        assert_eq!(c, vec![4.0, 5.0, 10.0, 11.0]);
    }
}

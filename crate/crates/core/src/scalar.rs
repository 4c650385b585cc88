//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All training math is written against [`Scalar`], which is implemented for
//! `f32` and `f64`. The trait carries one hook, [`Scalar::gemm`], so that the
//! dense products on the hot path can dispatch to a tuned kernel per type while
//! the rest of the code stays generic.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Strided view of a row-major or transposed operand for [`Scalar::gemm`].
#[derive(Clone, Copy, Debug)]
pub struct Strided<'a, T> {
    pub data: &'a [T],
    pub row_stride: usize,
    pub col_stride: usize,
}

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = a * b + beta * c` for an `m x k` times `k x n` product.
    ///
    /// `c` is dense row-major `m x n`. The reference loop accumulates over `k`
    /// in ascending order for every output entry.
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: Strided<'_, Self>,
        b: Strided<'_, Self>,
        beta: Self,
        c: &mut [Self],
    ) {
        reference_gemm(m, k, n, a, b, beta, c);
    }

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

pub(crate) fn reference_gemm<T: Float + NumAssign>(
    m: usize,
    k: usize,
    n: usize,
    a: Strided<'_, T>,
    b: Strided<'_, T>,
    beta: T,
    c: &mut [T],
) {
    assert!(c.len() >= m * n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                acc += a.data[i * a.row_stride + p * a.col_stride]
                    * b.data[p * b.row_stride + j * b.col_stride];
            }
            let out = &mut c[i * n + j];
            *out = if beta == T::zero() { acc } else { acc + beta * *out };
        }
    }
}

fn check_extent<T>(view: &Strided<'_, T>, rows: usize, cols: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * view.row_stride + (cols - 1) * view.col_stride;
    assert!(last < view.data.len(), "strided view out of bounds");
}

macro_rules! tuned_gemm {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: Strided<'_, Self>,
                b: Strided<'_, Self>,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n);
                check_extent(&a, m, k);
                check_extent(&b, k, n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    for v in &mut c[..m * n] {
                        *v *= beta;
                    }
                    return;
                }
                // SAFETY: extents of `a`, `b` and `c` were checked above.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.data.as_ptr(),
                        a.row_stride as isize,
                        a.col_stride as isize,
                        b.data.as_ptr(),
                        b.row_stride as isize,
                        b.col_stride as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

tuned_gemm!(f64, matrixmultiply::dgemm);
tuned_gemm!(f32, matrixmultiply::sgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuned_kernel_matches_reference_loop() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.11).cos()).collect();
        let av = Strided { data: &a, row_stride: 4, col_stride: 1 };
        let bv = Strided { data: &b, row_stride: 5, col_stride: 1 };
        let mut fast = vec![0.0; 15];
        let mut slow = vec![0.0; 15];
        f64::gemm(3, 4, 5, av, bv, 0.0, &mut fast);
        reference_gemm(3, 4, 5, av, bv, 0.0, &mut slow);
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_inner_dimension_scales_output() {
        let mut c = vec![2.0f32; 4];
        let empty: [f32; 0] = [];
        let v = Strided { data: &empty, row_stride: 0, col_stride: 1 };
        f32::gemm(2, 0, 2, v, v, 0.0, &mut c);
        assert_eq!(c, vec![0.0; 4]);
    }
}

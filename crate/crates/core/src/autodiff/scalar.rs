use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type usable by the engine.
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// `c = alpha * a * b + beta * c` over strided row/column views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. Strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to every float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

fn extent(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs() + 1
}

macro_rules! impl_scalar {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                assert!(a_strides.0 >= 0 && a_strides.1 >= 0);
                assert!(b_strides.0 >= 0 && b_strides.1 >= 0);
                assert!(c_strides.0 >= 0 && c_strides.1 >= 0);
                assert!(a.len() >= extent(m, k, a_strides), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, b_strides), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, c_strides), "gemm: output too short");
                // SAFETY: all strides are non-negative and every view was bounds
                // checked above, so the kernel only touches elements of the slices.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposed_views() {
        // a = [[1,2],[3,4]], b = a^T via strides
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 2, 2, 1.0, &a, (2, 1), &a, (1, 2), 0.0, &mut c, (2, 1));
        assert_eq!(c, [5.0, 11.0, 11.0, 25.0]);
    }
}

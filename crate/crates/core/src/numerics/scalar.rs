use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};

/// Floating-point scalar the tensor machinery is generic over.
///
/// `gemm` is the only per-type hook: f32/f64 route through matrixmultiply's
/// packed kernels, which dominate the runtime of every recurrence here.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// `out = a · b` (or `out += a · b` when `accumulate`), row-major.
    ///
    /// `a` holds an m×k matrix (k×m when `a_trans`, read transposed);
    /// likewise `b` is k×n (n×k when `b_trans`).
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        out: &mut [Self],
        accumulate: bool,
    );

    fn of(x: f64) -> Self {
        FromPrimitive::from_f64(x).expect("f64 conversion")
    }

    fn to_f64(self) -> f64;
}

macro_rules! gemm_impl {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                out: &mut [Self],
                accumulate: bool,
            ) {
                assert_eq!(a.len(), m * k);
                assert_eq!(b.len(), k * n);
                assert_eq!(out.len(), m * n);
                let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
                let beta = if accumulate { 1.0 as $t } else { 0.0 as $t };
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0 as $t,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        out.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

gemm_impl!(f32, matrixmultiply::sgemm);
gemm_impl!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_triple_loop() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect(); // 3x4
        let mut out = vec![0.0; 8];
        f64::gemm(2, 3, 4, &a, false, &b, false, &mut out, false);
        for i in 0..2 {
            for j in 0..4 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += a[i * 3 + l] * b[l * 4 + j];
                }
                assert!((out[i * 4 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gemm_transposed_views() {
        // a stored 3x2, used as 2x3; b stored 4x3, used as 3x4.
        let a: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let mut out = vec![0.0; 8];
        f64::gemm(2, 3, 4, &a, true, &b, true, &mut out, false);
        for i in 0..2 {
            for j in 0..4 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += a[l * 2 + i] * b[j * 3 + l];
                }
                assert!((out[i * 4 + j] - acc).abs() < 1e-12);
            }
        }
    }
}

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type: `f32` for training, `f64` for verification.
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Hyperbolic tangent; may trade the last ulps for speed.
    fn fast_tanh(self) -> Self {
        self.tanh()
    }

    /// `C = alpha * A * B + beta * C` over strided views.
    ///
    /// # Safety
    /// The strides must keep every index inside the respective buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_strided(
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
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    /// libm `tanhf` is several times slower than `expf`; the exp form loses
    /// relative precision near zero, where a short odd series takes over.
    #[inline]
    fn fast_tanh(self) -> f32 {
        let a = self.abs();
        if a < 0.05 {
            let x2 = self * self;
            self * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0)))
        } else {
            let e = (-2.0 * a).exp();
            ((1.0 - e) / (1.0 + e)).copysign(self)
        }
    }

    unsafe fn gemm_strided(
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

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm_strided(
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

/// Row-major `C[m×n] = alpha · op(A) · op(B) + beta · C`.
///
/// `A` is stored `[m×k]`, or `[k×m]` when `trans_a`; likewise `B` is `[k×n]`
/// or `[n×k]` when `trans_b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: F,
    a: &[F],
    b: &[F],
    beta: F,
    c: &mut [F],
) {
    assert!(a.len() >= m * k, "gemm: A has {} elements, need {}", a.len(), m * k);
    assert!(b.len() >= k * n, "gemm: B has {} elements, need {}", b.len(), k * n);
    assert!(c.len() >= m * n, "gemm: C has {} elements, need {}", c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above; strides describe dense row-major buffers.
    unsafe {
        F::gemm_strided(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

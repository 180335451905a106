//! Elementwise activations, affine maps, dropout masks and softmax.

use rand::Rng;

use super::{gemm, NumError, Real, Tensor};

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub fn relu<F: Real>(x: F) -> F {
    x.max(F::zero())
}

/// `y[rows×m] = x[rows×n] · Wᵀ + b` with `W: [m×n]`.
pub fn affine_forward<F: Real>(x: &[F], rows: usize, n: usize, w: &[F], m: usize, b: &[F], y: &mut [F]) {
    debug_assert_eq!(b.len(), m);
    gemm(false, true, rows, m, n, F::one(), x, w, F::zero(), y);
    for row in y[..rows * m].chunks_exact_mut(m) {
        for (v, &bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
}

/// Accumulates `dW += dyᵀx`, `db += Σ dy` and, if requested, `dx += dy·W`.
#[allow(clippy::too_many_arguments)]
pub fn affine_backward<F: Real>(
    x: &[F],
    rows: usize,
    n: usize,
    w: &[F],
    m: usize,
    dy: &[F],
    dx: Option<&mut [F]>,
    dw: &mut [F],
    db: &mut [F],
) {
    gemm(true, false, m, n, rows, F::one(), dy, x, F::one(), dw);
    for row in dy[..rows * m].chunks_exact(m) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        gemm(false, false, rows, n, m, F::one(), dy, w, F::one(), dx);
    }
}

/// Shape-checked affine map on tensors: `x [B×n]`, `w [m×n]`, `b [m]`.
pub fn affine<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, NumError> {
    let (xs, ws, bs) = (x.shape(), w.shape(), b.shape());
    if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[1] || bs[0] != ws[0] {
        return Err(NumError::Shape(format!(
            "affine: x {xs:?}, W {ws:?}, b {bs:?}"
        )));
    }
    let (rows, n, m) = (xs[0], xs[1], ws[0]);
    let mut y = Tensor::zeros(&[rows, m]);
    affine_forward(&x.data, rows, n, &w.data, m, &b.data, &mut y.data);
    Ok(y)
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<F: Real>(rng: &mut impl Rng, n: usize, p: f64) -> Vec<F> {
    if p <= 0.0 {
        return vec![F::one(); n];
    }
    let keep = F::from_f64(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect()
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place<F: Real>(v: &mut [F]) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `log σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

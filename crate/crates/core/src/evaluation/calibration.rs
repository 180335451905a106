//! Temperature scaling fitted by negative log-likelihood.

use super::{EvalError, ScoredSet};
use crate::numkernel::ops::{log_sigmoid, sigmoid};

pub const T_MIN: f64 = 0.01;
pub const T_MAX: f64 = 10.0;
/// Search stops once the bracket is narrower than this.
pub const T_TOLERANCE: f64 = 1e-4;

/// Mean negative log-likelihood of `σ(logit / t)`.
pub fn temperature_nll(logits: &[f64], labels: &[u8], t: f64) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| if y == 1 { -log_sigmoid(z / t) } else { -log_sigmoid(-z / t) })
        .sum();
    sum / logits.len() as f64
}

/// Golden-section search for the NLL-minimizing temperature on `[T_MIN, T_MAX]`.
pub fn fit_temperature(set: &ScoredSet) -> Result<f64, EvalError> {
    let n_pos = set.n_pos();
    if n_pos == 0 || n_pos == set.len() {
        return Err(EvalError::Undefined("temperature fit needs both classes"));
    }
    let f = |t: f64| temperature_nll(&set.logit, &set.label, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (T_MIN, T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a >= T_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Rescales scores to `σ(logit / t)`; logits and order are untouched.
pub fn apply_temperature(set: &ScoredSet, t: f64) -> ScoredSet {
    let mut out = set.clone();
    for (s, &z) in out.score.iter_mut().zip(&set.logit) {
        *s = sigmoid(z / t);
    }
    out
}

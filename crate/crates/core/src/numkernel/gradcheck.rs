//! Central finite-difference gradient checks in 64-bit.

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a − n| / max(|a|, |n|, 1e-7)` between two derivatives.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest coordinate-wise [`rel_error`] between `analytic` and the numeric gradient.
pub fn max_rel_error(analytic: &[f64], x: &[f64], f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(analytic.len(), x.len());
    numeric_gradient(x, f)
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| rel_error(a, n))
        .fold(0.0, f64::max)
}

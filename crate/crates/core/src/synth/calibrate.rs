//! Baseline hazard that yields a target positive rate per prediction hour.
//!
//! The expected rate is a ratio of expectations over stays: positive hours
//! over prediction hours. Given a hazard λ and stay length L both are exact
//! finite sums; L is integrated with Gauss-Legendre on unit cells (the
//! integrand has kinks at whole hours) and the structured driver with a
//! trapezoid rule on the standard normal. Beyond 72 h nothing depends on L.
//! Minute quantization of times is ignored.

use super::plan::{Drivers, KIND_SHARES};
use super::{SynthConfig, SynthError};
use crate::ingest::OutcomeKind;

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Stay length past which expected counts no longer change.
const FLAT_LOS: f64 = 72.0;

fn death_share() -> f64 {
    KIND_SHARES
        .iter()
        .find(|(k, _)| *k == OutcomeKind::Mortality)
        .map_or(0.0, |s| s.1)
}

/// Expected (positive hours, prediction hours) of one stay of length `los`
/// in [24, 72] under hazard `rate`; `surv[k] = exp(-rate·k)` for k ≤ 73.
fn stay_counts(rate: f64, los: f64, surv: &[f64], p_death: f64) -> (f64, f64) {
    let whole = los.floor() as i64;
    let m = whole.min(48);
    let cdf_int = |k: i64| 1.0 - surv[k as usize];
    let cdf_los = -(-rate * los).exp_m1();

    let n_alive = (m - 5) as f64;
    let mut pos_alive = 0.0;
    for t in 6..=m {
        let upper = if (t + 24) as f64 <= los { cdf_int(t + 24) } else { cdf_los };
        pos_alive += upper - cdf_int(t);
    }

    // Death ends the stay; deaths before 24 h leave the cohort entirely.
    let mut n_death = (1.0 - cdf_los) * n_alive;
    let mut pos_death = 0.0;
    let last = (los.ceil() as i64).min(FLAT_LOS as i64);
    for k in 24..last {
        let hi = ((k + 1) as f64).min(los);
        let w = surv[k as usize] - if hi < (k + 1) as f64 { 1.0 - cdf_los } else { surv[(k + 1) as usize] };
        let m_k = k.min(48);
        n_death += w * (m_k - 5) as f64;
        pos_death += w * (m_k - (k - 23).max(6) + 1).max(0) as f64;
    }
    (
        (1.0 - p_death) * pos_alive + p_death * pos_death,
        (1.0 - p_death) * n_alive + p_death * n_death,
    )
}

struct LosQuadrature {
    /// Nodes below `FLAT_LOS` with normalized weights.
    nodes: Vec<(f64, f64)>,
    /// Probability mass at or above `FLAT_LOS`.
    flat_mass: f64,
}

impl LosQuadrature {
    fn new(cfg: &SynthConfig) -> Self {
        let (mu, sigma) = (cfg.los_median_hours.ln(), cfg.los_sigma);
        let density = |l: f64| {
            let z = (l.ln() - mu) / sigma;
            (-0.5 * z * z).exp() / l
        };
        let mut cuts = vec![cfg.los_min_hours];
        let mut k = cfg.los_min_hours.floor() + 1.0;
        while k < cfg.los_max_hours {
            cuts.push(k);
            k += 1.0;
        }
        cuts.push(cfg.los_max_hours);
        let (mut nodes, mut total, mut flat) = (Vec::new(), 0.0, 0.0);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let l = mid + half * x;
                let mass = w * half * density(l);
                total += mass;
                if a >= FLAT_LOS {
                    flat += mass;
                } else {
                    nodes.push((l, mass));
                }
            }
        }
        for n in &mut nodes {
            n.1 /= total;
        }
        LosQuadrature {
            nodes,
            flat_mass: flat / total,
        }
    }
}

fn normal_nodes() -> Vec<(f64, f64)> {
    let h = 0.125;
    let pts: Vec<(f64, f64)> = (-64..=64)
        .map(|i| {
            let z = i as f64 * h;
            (z, (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    pts.into_iter().map(|(z, w)| (z, w / total)).collect()
}

/// Expected positive fraction of prediction hours at baseline hazard `base`.
pub fn expected_prevalence(cfg: &SynthConfig, base: f64) -> f64 {
    let los = LosQuadrature::new(cfg);
    let p_death = death_share();
    let mut surv = [0.0; 74];
    let (mut pos, mut n) = (0.0, 0.0);
    let text = [(false, 1.0 - cfg.text_strength), (true, cfg.text_strength)];
    for (z, wz) in normal_nodes() {
        for (u, wu) in text {
            if wu == 0.0 {
                continue;
            }
            let rate = super::plan::hazard(cfg, base, Drivers { a: z, u });
            for (k, s) in surv.iter_mut().enumerate() {
                *s = (-rate * k as f64).exp();
            }
            let w = wz * wu;
            for &(l, wl) in &los.nodes {
                let (p, c) = stay_counts(rate, l, &surv, p_death);
                pos += w * wl * p;
                n += w * wl * c;
            }
            if los.flat_mass > 0.0 {
                let (p, c) = stay_counts(rate, FLAT_LOS, &surv, p_death);
                pos += w * los.flat_mass * p;
                n += w * los.flat_mass * c;
            }
        }
    }
    pos / n
}

/// Baseline hazard on the rising branch whose expected prevalence is `cfg.event_rate`.
///
/// Very large hazards push events before the first prediction hour, so the
/// rate is not monotone; the search takes the first crossing on a log grid
/// and bisects it.
pub fn calibrate_base_hazard(cfg: &SynthConfig) -> Result<f64, SynthError> {
    let target = cfg.event_rate;
    let f = |log_r: f64| expected_prevalence(cfg, log_r.exp()) - target;
    let (mut lo, mut hi) = (1e-7f64.ln(), None);
    let mut best = f64::NEG_INFINITY;
    let step = 1.5f64.ln();
    let mut x = lo;
    while x < 10f64.ln() {
        let next = x + step;
        let v = f(next);
        best = best.max(v + target);
        if v >= 0.0 {
            lo = x;
            hi = Some(next);
            break;
        }
        x = next;
    }
    let Some(mut hi) = hi else {
        return Err(SynthError::Infeasible(format!(
            "event rate {target} unreachable; the largest achievable is {best:.4}"
        )));
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force count over a fine grid of event times, independent of the
    /// closed-form cell sums.
    fn brute_counts(rate: f64, los: f64, p_death: f64) -> (f64, f64) {
        let steps = 400_000;
        let horizon = 400.0;
        let dt = horizon / steps as f64;
        let (mut pos, mut n) = (0.0, 0.0);
        let samples = |end: f64| (6..=(end.floor() as i64).min(48)).collect::<Vec<_>>();
        for i in 0..steps {
            let e = (i as f64 + 0.5) * dt;
            let w = rate * (-rate * e).exp() * dt;
            // non-death kinds
            let hours = samples(los);
            n += (1.0 - p_death) * w * hours.len() as f64;
            if e <= los {
                let hits = hours.iter().filter(|&&t| (t as f64) < e && e <= t as f64 + 24.0).count();
                pos += (1.0 - p_death) * w * hits as f64;
            }
            // death
            if e < los {
                if e >= 24.0 {
                    let hours = samples(e);
                    n += p_death * w * hours.len() as f64;
                    let hits = hours.iter().filter(|&&t| (t as f64) < e && e <= t as f64 + 24.0).count();
                    pos += p_death * w * hits as f64;
                }
            } else {
                n += p_death * w * hours.len() as f64;
            }
        }
        let tail = (-rate * horizon).exp();
        n += tail * samples(los).len() as f64;
        (pos, n)
    }

    #[test]
    fn closed_form_counts_match_brute_force() {
        for &(rate, los) in &[(0.01f64, 30.5f64), (0.003, 24.2), (0.05, 61.7), (0.02, 72.0), (0.02, 150.0), (0.2, 47.3)] {
            let mut surv = [0.0; 74];
            for (k, s) in surv.iter_mut().enumerate() {
                *s = (-rate * k as f64).exp();
            }
            let (p, n) = stay_counts(rate, los.min(FLAT_LOS), &surv, 0.2);
            let (bp, bn) = brute_counts(rate, los, 0.2);
            assert!((p - bp).abs() < 2e-3 * bp.max(1e-3), "pos {rate} {los}: {p} vs {bp}");
            assert!((n - bn).abs() < 2e-3 * bn, "n {rate} {los}: {n} vs {bn}");
        }
    }

    #[test]
    fn calibration_hits_target_and_rejects_unreachable() {
        let cfg = SynthConfig::default();
        let base = calibrate_base_hazard(&cfg).unwrap();
        assert!((expected_prevalence(&cfg, base) - 0.028).abs() < 1e-9);
        let greedy = SynthConfig {
            event_rate: 0.9,
            ..SynthConfig::default()
        };
        assert!(matches!(calibrate_base_hazard(&greedy), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn prevalence_rises_with_strength_at_fixed_hazard() {
        let rates: Vec<f64> = [0.0, 0.75, 1.5]
            .iter()
            .map(|&s| {
                let cfg = SynthConfig {
                    structured_strength: s,
                    ..SynthConfig::default()
                };
                expected_prevalence(&cfg, 0.002)
            })
            .collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
    }
}

//! Class-weighted focal loss with label smoothing, evaluated in logit space.
//!
//! With smoothed target `y' = y(1 − ε) + ε/2`,
//!
//! ```text
//! L = −mean[ α y' (1−p)^γ log p + (1−α)(1−y') p^γ log(1−p) ]
//! ```
//!
//! The focal factors stay tied to the hard class directions; only the target
//! weights are smoothed.

use crate::numkernel::ops::log_sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
    pub smoothing: f64,
}

impl FocalParams {
    fn weights(&self, y: u8) -> (f64, f64) {
        let y_s = y as f64 * (1.0 - self.smoothing) + self.smoothing / 2.0;
        (self.alpha * y_s, (1.0 - self.alpha) * (1.0 - y_s))
    }
}

/// Loss of one sample and its derivative with respect to the logit.
pub fn focal_term(z: f64, y: u8, fp: &FocalParams) -> (f64, f64) {
    let (a, b) = fp.weights(y);
    let g = fp.gamma;
    let log_p = log_sigmoid(z);
    let log_q = log_sigmoid(-z);
    let (p, q) = (log_p.exp(), log_q.exp());
    // p^γ and (1−p)^γ through logs, so saturated logits never form 0·∞.
    let pg = (g * log_p).exp();
    let qg = (g * log_q).exp();
    let loss = -(a * qg * log_p + b * pg * log_q);
    let grad = -a * qg * (q - g * p * log_p) - b * pg * (g * q * log_q - p);
    (loss, grad)
}

/// Mean loss over a batch of logits.
pub fn focal_loss_logits(z: &[f64], y: &[u8], fp: &FocalParams) -> f64 {
    assert_eq!(z.len(), y.len());
    z.iter().zip(y).map(|(&z, &y)| focal_term(z, y, fp).0).sum::<f64>() / z.len() as f64
}

/// Mean loss and `∂L/∂z` for every logit of the batch.
pub fn focal_loss_and_grad(z: &[f64], y: &[u8], fp: &FocalParams) -> (f64, Vec<f64>) {
    assert_eq!(z.len(), y.len());
    let n = z.len() as f64;
    let mut total = 0.0;
    let grads = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| {
            let (l, g) = focal_term(z, y, fp);
            total += l;
            g / n
        })
        .collect();
    (total / n, grads)
}

/// Mean loss over probabilities, mapped to logits first.
pub fn focal_loss(p: &[f64], y: &[u8], fp: &FocalParams) -> f64 {
    let z: Vec<f64> = p.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
    focal_loss_logits(&z, y, fp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::gradcheck::max_rel_error;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PAPER_DEFAULTS: FocalParams = FocalParams {
        alpha: 0.75,
        gamma: 2.0,
        smoothing: 0.05,
    };

    #[test]
    fn reduces_to_half_bce() {
        let fp = FocalParams {
            alpha: 0.5,
            gamma: 0.0,
            smoothing: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p: f64 = rng.gen_range(0.001..0.999);
            let y = rng.gen_range(0..2u8);
            let bce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
            assert!((focal_loss(&[p], &[y], &fp) - 0.5 * bce).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_limit_is_zero() {
        let fp = FocalParams {
            smoothing: 0.0,
            ..PAPER_DEFAULTS
        };
        let mut prev = f64::INFINITY;
        for z in [2.0, 5.0, 10.0, 20.0, 40.0, 800.0] {
            let l = focal_loss_logits(&[z], &[1], &fp);
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-300);
        assert_eq!(focal_loss_logits(&[-800.0], &[0], &fp), 0.0);
    }

    #[test]
    fn fixture_matches_extended_precision_value() {
        // Evaluated independently at 50 significant digits.
        let expected = 0.01242728580403021110306718;
        let l = focal_loss(&[0.9], &[1], &PAPER_DEFAULTS);
        assert!((l - expected).abs() < 1e-12, "{l}");
    }

    #[test]
    fn saturated_logits_stay_finite() {
        for z in [-1e4, -745.0, -40.0, 0.0, 40.0, 745.0, 1e4] {
            for y in [0, 1] {
                let (l, g) = focal_term(z, y, &PAPER_DEFAULTS);
                assert!(l.is_finite() && g.is_finite(), "z={z} y={y}");
            }
        }
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fp = FocalParams {
                alpha: rng.gen_range(0.1..0.9),
                gamma: rng.gen_range(0.0..3.0),
                smoothing: rng.gen_range(0.0..0.2),
            };
            let z: Vec<f64> = (0..16).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let y: Vec<u8> = (0..16).map(|_| rng.gen_range(0..2)).collect();
            let (_, g) = focal_loss_and_grad(&z, &y, &fp);
            let e = max_rel_error(&g, &z, |v| focal_loss_logits(v, &y, &fp));
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
    }

    #[test]
    fn smoothing_penalizes_confident_extremes() {
        for &z in &[4.0, 8.0, 12.0] {
            let mut prev = -1.0;
            for k in 0..10 {
                let fp = FocalParams {
                    smoothing: k as f64 * 0.05,
                    ..PAPER_DEFAULTS
                };
                let l = focal_loss_logits(&[z, -z], &[1, 0], &fp);
                assert!(l > prev, "z={z} eps={}", fp.smoothing);
                prev = l;
            }
        }
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(z in -50.0f64..50.0, y in 0u8..2, a in 0.01f64..0.99, g in 0.0f64..5.0, e in 0.0f64..0.5) {
            let fp = FocalParams { alpha: a, gamma: g, smoothing: e };
            prop_assert!(focal_term(z, y, &fp).0 >= 0.0);
        }
    }
}

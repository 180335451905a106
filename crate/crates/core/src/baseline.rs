//! Logistic regression over fixed-length window summaries.
//!
//! Each of the 26 channels contributes five statistics over its mask=1 cells
//! in the 48-hour window (last, mean, min, max, count), laid out channel-major
//! as `5c + k`, followed by the three statics (age, sex, note flag): 133
//! features. Channels without any value in the window get zeros.

use std::path::Path;

use crate::catalog::N_CHANNELS;
use crate::numkernel::ops::{log_sigmoid, sigmoid};
use crate::numkernel::{gemm, Checkpoint, NumError, ParameterSet, Tensor, TrainingState};
use crate::sampler::{Dataset, Sample, N_STATICS, WINDOW_HOURS};

pub const N_SUMMARY: usize = N_CHANNELS * 5;
pub const N_FEATURES: usize = N_SUMMARY + N_STATICS;
pub const CHECKPOINT_KIND: &str = "logreg";

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("logistic regression needs both classes in the training data")]
    SingleClass,
    #[error("{rows} feature rows of width {width} for {labels} labels")]
    Shape { rows: usize, width: usize, labels: usize },
    #[error("checkpoint of kind `{0}` is not a logistic model")]
    WrongKind(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Summary statistics of one window plus statics.
pub fn summarize_window(window: &[f64], mask: &[u8], statics: [f64; N_STATICS]) -> [f64; N_FEATURES] {
    assert_eq!(window.len(), WINDOW_HOURS * N_CHANNELS);
    let mut out = [0.0; N_FEATURES];
    for c in 0..N_CHANNELS {
        let (mut last, mut sum, mut lo, mut hi, mut n) = (0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for r in 0..WINDOW_HOURS {
            let k = r * N_CHANNELS + c;
            if mask[k] == 1 {
                let v = window[k];
                last = v;
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
                n += 1;
            }
        }
        if n > 0 {
            out[5 * c..5 * c + 5].copy_from_slice(&[last, sum / n as f64, lo, hi, n as f64]);
        }
    }
    out[N_SUMMARY..].copy_from_slice(&statics);
    out
}

pub fn summarize_sample(s: &Sample) -> [f64; N_FEATURES] {
    summarize_window(&s.window, &s.mask, [s.age_norm, s.gender_flag, s.has_note as f64])
}

/// Row-major `[n × 133]` features and labels for every sample of `data`.
pub fn summarize_dataset(data: &Dataset) -> (Vec<f64>, Vec<u8>) {
    let mut x = Vec::with_capacity(data.len() * N_FEATURES);
    for i in 0..data.len() {
        x.extend_from_slice(&summarize_sample(&data.sample(i)));
    }
    (x, data.labels())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogregOptions {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogregOptions {
    fn default() -> Self {
        LogregOptions {
            l2: 1e-3,
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogregFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

impl LogisticModel {
    pub fn zeros(dim: usize, l2: f64) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            l2,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Logits of every row of a row-major feature matrix.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = self.weights.len();
        let n = x.len() / d;
        let mut z = vec![self.bias; n];
        gemm(false, false, n, 1, d, 1.0, x, &self.weights, 1.0, &mut z);
        z
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint, BaselineError> {
        let mut p = ParameterSet::<f64>::new();
        p.add("logreg.w", Tensor::from_vec(&[self.weights.len()], self.weights.clone())?)?;
        p.add("logreg.b", Tensor::from_vec(&[1], vec![self.bias])?)?;
        let mut c = Checkpoint::new(CHECKPOINT_KIND, &p, TrainingState::default(), format!("logreg.l2={}\n", self.l2));
        c.include_moments = false;
        Ok(c)
    }

    /// Weights come back at the checkpoint's 32-bit precision.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, BaselineError> {
        if c.kind != CHECKPOINT_KIND {
            return Err(BaselineError::WrongKind(c.kind.clone()));
        }
        let get = |name: &str| {
            c.params
                .id(name)
                .map(|id| c.params.value(id).iter().map(|&v| v as f64).collect::<Vec<f64>>())
                .ok_or_else(|| NumError::Checkpoint(format!("missing `{name}`")))
        };
        let l2 = c.config_value("logreg.l2").and_then(|v| v.parse().ok()).unwrap_or(0.0);
        Ok(LogisticModel {
            weights: get("logreg.w")?,
            bias: get("logreg.b")?[0],
            l2,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Mean negative log-likelihood plus `(l2/2)·‖w‖²`; the bias is not penalized.
pub fn regularized_nll(model: &LogisticModel, x: &[f64], y: &[u8]) -> f64 {
    let z = model.logits(x);
    nll_from_logits(&z, y) + 0.5 * model.l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

fn nll_from_logits(z: &[f64], y: &[u8]) -> f64 {
    let s: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| if y == 1 { -log_sigmoid(z) } else { -log_sigmoid(-z) })
        .sum();
    s / z.len() as f64
}

/// Gradient of [`regularized_nll`]: `(∇w, ∂b)`.
pub fn nll_gradient(model: &LogisticModel, x: &[f64], y: &[u8]) -> (Vec<f64>, f64) {
    let d = model.weights.len();
    let n = y.len();
    let z = model.logits(x);
    let r: Vec<f64> = z.iter().zip(y).map(|(&z, &y)| (sigmoid(z) - y as f64) / n as f64).collect();
    let mut gw: Vec<f64> = model.weights.iter().map(|w| model.l2 * w).collect();
    gemm(true, false, d, 1, n, 1.0, x, &r, 1.0, &mut gw);
    (gw, r.iter().sum())
}

fn check_shape(x: &[f64], y: &[u8], width: usize) -> Result<(), BaselineError> {
    if y.is_empty() || x.len() != y.len() * width {
        return Err(BaselineError::Shape {
            rows: x.len() / width.max(1),
            width,
            labels: y.len(),
        });
    }
    if !y.contains(&1) || !y.contains(&0) {
        return Err(BaselineError::SingleClass);
    }
    Ok(())
}

/// Fits `w, b` by diagonally scaled gradient descent with Armijo backtracking.
///
/// The step direction is the gradient divided by a fixed per-coordinate
/// curvature bound `¼·mean(x_j²) + l2`, which keeps count features (0..48) and
/// z-scored features on the same footing. Stops when the gradient norm falls
/// below `tol`; hitting `max_iter` logs a warning and still returns the model.
pub fn train_logreg(x: &[f64], y: &[u8], dim: usize, opts: &LogregOptions) -> Result<LogregFit, BaselineError> {
    check_shape(x, y, dim)?;
    let n = y.len() as f64;
    let mut scale = vec![0.0; dim + 1];
    for row in x.chunks_exact(dim) {
        for (s, v) in scale.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    for s in scale.iter_mut().take(dim) {
        *s = 1.0 / (0.25 * *s / n + opts.l2).max(1e-12);
    }
    scale[dim] = 4.0;

    let mut model = LogisticModel::zeros(dim, opts.l2);
    let mut loss = regularized_nll(&model, x, y);
    let mut step: f64 = 1.0;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (gw, gb) = nll_gradient(&model, x, y);
        grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if grad_norm < opts.tol {
            break;
        }
        iterations += 1;
        // Directional derivative along −D·g.
        let decrease: f64 = gw.iter().zip(&scale).map(|(g, s)| g * g * s).sum::<f64>() + gb * gb * scale[dim];
        step = (step * 2.0).min(1e3);
        loop {
            let trial = LogisticModel {
                weights: model.weights.iter().zip(&gw).zip(&scale).map(|((w, g), s)| w - step * s * g).collect(),
                bias: model.bias - step * scale[dim] * gb,
                l2: opts.l2,
            };
            let trial_loss = regularized_nll(&trial, x, y);
            if trial_loss <= loss - 1e-4 * step * decrease {
                model = trial;
                loss = trial_loss;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                log::warn!("line search stalled at gradient norm {grad_norm:.3e}");
                return Ok(LogregFit {
                    model,
                    iterations,
                    loss,
                    grad_norm,
                    converged: false,
                });
            }
        }
    }
    let converged = grad_norm < opts.tol;
    if !converged {
        log::warn!("logistic regression stopped after {iterations} iterations, gradient norm {grad_norm:.3e}");
    }
    Ok(LogregFit {
        model,
        iterations,
        loss,
        grad_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::auroc;
    use crate::numkernel::gradcheck::max_rel_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, n: usize, d: usize, sep: f64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 3 == 0) as u8;
            for j in 0..d {
                let shift = if j == 0 { sep * (2.0 * label as f64 - 1.0) } else { 0.0 };
                x.push(rng.gen_range(-1.0..1.0) + shift + if j == d - 1 { 20.0 * rng.gen::<f64>() } else { 0.0 });
            }
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn summary_hand_case() {
        let mut w = vec![0.0; WINDOW_HOURS * N_CHANNELS];
        let mut m = vec![0u8; w.len()];
        for (r, v) in [(10, 2.0), (20, -1.0), (30, 5.0)] {
            w[r * N_CHANNELS + 3] = v;
            m[r * N_CHANNELS + 3] = 1;
        }
        for r in 0..WINDOW_HOURS {
            w[r * N_CHANNELS + 7] = 0.25;
            m[r * N_CHANNELS + 7] = 1;
        }
        let f = summarize_window(&w, &m, [0.1, 1.0, 0.0]);
        assert_eq!(&f[15..20], &[5.0, 2.0, -1.0, 5.0, 3.0]);
        assert_eq!(&f[35..40], &[0.25, 0.25, 0.25, 0.25, 48.0]);
        assert_eq!(&f[0..5], &[0.0; 5]);
        assert_eq!(&f[N_SUMMARY..], &[0.1, 1.0, 0.0]);
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy(1, 40, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = LogisticModel {
            weights: (0..4).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            bias: 0.2,
            l2: 0.1,
        };
        let (gw, _) = nll_gradient(&model, &x, &y);
        let e = max_rel_error(&gw, &model.weights, |w| {
            regularized_nll(&LogisticModel { weights: w.to_vec(), ..model.clone() }, &x, &y)
        });
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn separable_toy_ranks_perfectly() {
        let (x, y) = toy(3, 200, 2, 3.0);
        let fit = train_logreg(&x, &y, 2, &LogregOptions::default()).unwrap();
        assert_eq!(auroc(&fit.model.logits(&x), &y).unwrap(), 1.0);
    }

    #[test]
    fn optimum_beats_long_fixed_step_oracle() {
        let (x, y) = toy(4, 60, 3, 0.7);
        let opts = LogregOptions {
            l2: 0.05,
            ..Default::default()
        };
        let fit = train_logreg(&x, &y, 3, &opts).unwrap();
        assert!(fit.converged, "{fit:?}");
        // Plain fixed-step descent, far more iterations than the fit used.
        let mut m = LogisticModel::zeros(3, opts.l2);
        for _ in 0..(10 * fit.iterations).max(200_000) {
            let (gw, gb) = nll_gradient(&m, &x, &y);
            for (w, g) in m.weights.iter_mut().zip(&gw) {
                *w -= 0.01 * g;
            }
            m.bias -= 0.01 * gb;
        }
        let oracle = regularized_nll(&m, &x, &y);
        assert!(fit.loss <= oracle + 1e-6, "{} vs {oracle}", fit.loss);
    }

    #[test]
    fn restarts_agree() {
        let (x, y) = toy(5, 120, 4, 0.4);
        let a = train_logreg(&x, &y, 4, &LogregOptions::default()).unwrap();
        let mut shuffled: Vec<usize> = (0..120).collect();
        shuffled.reverse();
        let xs: Vec<f64> = shuffled.iter().flat_map(|&i| x[i * 4..(i + 1) * 4].to_vec()).collect();
        let ys: Vec<u8> = shuffled.iter().map(|&i| y[i]).collect();
        let b = train_logreg(&xs, &ys, 4, &LogregOptions::default()).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-6);
    }

    #[test]
    fn heavy_penalty_predicts_prevalence() {
        let (x, y) = toy(6, 300, 3, 1.0);
        let fit = train_logreg(&x, &y, 3, &LogregOptions { l2: 1e6, ..Default::default() }).unwrap();
        assert!(fit.model.weights.iter().all(|w| w.abs() < 1e-5));
        let pi = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        assert!((sigmoid(fit.model.bias) - pi).abs() < 1e-4);
    }

    #[test]
    fn prediction_and_checkpoint() {
        let mut m = LogisticModel::zeros(N_FEATURES, 1e-3);
        assert_eq!(m.predict(&[1.0; N_FEATURES]), 0.5);
        m.weights[4] = 0.5;
        m.weights[10] = -0.25;
        m.bias = 0.125;
        let x: Vec<f64> = (0..N_FEATURES).map(|i| i as f64 * 0.01).collect();
        assert!((m.logit(&x) - (0.5 * 0.04 - 0.25 * 0.1 + 0.125)).abs() < 1e-15);
        let mut x2 = x.clone();
        x2[4] += 1.0;
        assert!(m.predict(&x2) > m.predict(&x));
        let back = LogisticModel::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(train_logreg(&x, &[1], N_FEATURES, &LogregOptions::default()).is_err());
    }
}

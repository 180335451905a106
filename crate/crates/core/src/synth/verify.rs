//! Diagnostics that a bundle carries the signal it was asked to plant.

use std::collections::HashMap;
use std::path::Path;

use super::{read_bundle_config, read_manifest, SynthError, MANIFEST_FILE};
use crate::evaluation::auroc;
use crate::ingest::ingest_dir;
use crate::sampler::{enumerate_samples, label_sample};

/// Largest driver correlation accepted as independent.
pub const MAX_DRIVER_CORRELATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalReport {
    pub n_stays: usize,
    pub n_samples: usize,
    pub n_positive: usize,
    pub prevalence: f64,
    /// AUROC of ranking samples by `P(event in (t, t + 24] | a)` under the
    /// planted hazard with the text term left out; 0.5 if a class is empty.
    pub oracle_auroc: f64,
    /// Hanley-McNeil standard error of `oracle_auroc`.
    pub oracle_se: f64,
    /// Pearson correlation between structured driver and text indicator over retained stays.
    pub driver_correlation: f64,
    pub margin: f64,
}

impl SignalReport {
    pub fn structured_ok(&self) -> bool {
        self.oracle_auroc - 0.5 > self.margin
    }

    pub fn independent(&self) -> bool {
        self.driver_correlation.abs() < MAX_DRIVER_CORRELATION
    }

    pub fn to_text(&self) -> String {
        format!(
            "stays {}\nsamples {}\npositives {}\nprevalence {:.5}\noracle_auroc {:.4} (se {:.4})\n\
             structured_signal {}\ndriver_correlation {:.4}\nindependent {}\n",
            self.n_stays,
            self.n_samples,
            self.n_positive,
            self.prevalence,
            self.oracle_auroc,
            self.oracle_se,
            if self.structured_ok() { "ok" } else { "weak" },
            self.driver_correlation,
            self.independent()
        )
    }
}

fn hanley_mcneil(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let (p, n) = (n_pos as f64, n_neg as f64);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    ((auc * (1.0 - auc) + (p - 1.0) * (q1 - auc * auc) + (n - 1.0) * (q2 - auc * auc)) / (p * n)).sqrt()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Ingests the bundle in `dir` and scores its samples with the planted hazard.
pub fn verify_signal(dir: &Path, margin: f64) -> Result<SignalReport, SynthError> {
    let cfg = read_bundle_config(dir)?;
    let text = std::fs::read_to_string(dir.join(super::CONFIG_FILE))?;
    let resolved = text
        .lines()
        .find_map(|l| l.strip_prefix("synth.resolved_base_hazard="))
        .and_then(|v| v.trim().parse::<f64>().ok());
    let base = match resolved {
        Some(b) => b,
        None => super::base_hazard(&cfg)?,
    };
    let manifest: HashMap<_, _> = read_manifest(&dir.join(MANIFEST_FILE))?
        .into_iter()
        .map(|e| (e.stay_id, e))
        .collect();
    let (cohort, _) = ingest_dir(dir)?;
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    let (mut a, mut u) = (Vec::new(), Vec::new());
    for stay in &cohort.stays {
        let entry = manifest.get(&stay.stay_id).ok_or_else(|| SynthError::Format {
            file: MANIFEST_FILE.into(),
            msg: format!("stay {} missing", stay.stay_id),
        })?;
        a.push(entry.drivers.a);
        u.push(entry.drivers.u as u8 as f64);
        let rate = base * (cfg.structured_strength * entry.drivers.a).exp();
        for t in enumerate_samples(stay) {
            let horizon = crate::sampler::HORIZON_HOURS as f64;
            scores.push((-rate * t as f64).exp() * -(-rate * horizon).exp_m1());
            labels.push(label_sample(t, cohort.outcomes_for(stay.stay_id), stay));
        }
    }
    let n_positive = labels.iter().filter(|&&l| l == 1).count();
    let oracle_auroc = auroc(&scores, &labels).unwrap_or(0.5);
    Ok(SignalReport {
        n_stays: cohort.stays.len(),
        n_samples: labels.len(),
        n_positive,
        prevalence: n_positive as f64 / labels.len().max(1) as f64,
        oracle_auroc,
        oracle_se: hanley_mcneil(oracle_auroc, n_positive, labels.len() - n_positive),
        driver_correlation: pearson(&a, &u),
        margin,
    })
}

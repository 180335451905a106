//! Aggregate reports, missingness strata and curve exports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{auprc, auroc, brier, confusion_at, ece, pr_points, roc_points, ReliabilityBin, DEFAULT_BINS};
use super::{write_text, EvalError, ScoredSet};

/// Interior cut points of the missingness strata.
pub const DEFAULT_BOUNDARIES: [f64; 2] = [0.5, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub n_pos: usize,
    /// `None` marks a metric that is undefined for this stratum.
    pub positive_rate: Option<f64>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

impl StratumReport {
    fn of(name: String, lower: f64, upper: f64, set: &ScoredSet) -> Self {
        let n = set.len();
        let n_pos = set.n_pos();
        StratumReport {
            name,
            lower,
            upper,
            n,
            n_pos,
            positive_rate: (n > 0).then(|| n_pos as f64 / n as f64),
            auroc: set.auroc().ok(),
            auprc: set.auprc().ok(),
        }
    }
}

/// Metrics per missing-fraction band, followed by the overall row.
///
/// Bands are `[0, b0)`, `[b0, b1)`, ..., `[b_last, 1]`.
pub fn stratify_by_missingness(set: &ScoredSet, boundaries: &[f64]) -> Vec<StratumReport> {
    let mut edges = vec![0.0];
    edges.extend_from_slice(boundaries);
    edges.push(1.0);
    let last = edges.len() - 2;
    let mut out: Vec<StratumReport> = (0..=last)
        .map(|k| {
            let (lo, hi) = (edges[k], edges[k + 1]);
            let idx: Vec<usize> = (0..set.len())
                .filter(|&i| {
                    let m = set.missing_frac[i];
                    m >= lo && (m < hi || (k == last && m <= hi))
                })
                .collect();
            let close = if k == last { ']' } else { ')' };
            StratumReport::of(format!("[{lo:.1},{hi:.1}{close}"), lo, hi, &set.subset(&idx))
        })
        .collect();
    out.push(StratumReport::of("overall".into(), 0.0, 1.0, set));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub n_pos: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub brier: f64,
    pub ece: f64,
    pub threshold: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub temperature: Option<f64>,
    pub reliability: Vec<ReliabilityBin>,
    pub strata: Vec<StratumReport>,
}

impl MetricsReport {
    /// Full report at a threshold chosen elsewhere (normally on validation data).
    pub fn compute(set: &ScoredSet, threshold: f64) -> Result<Self, EvalError> {
        let (s, y) = (&set.score, &set.label);
        let (e, reliability) = ece(s, y, DEFAULT_BINS)?;
        let c = confusion_at(s, y, threshold)?;
        Ok(MetricsReport {
            n: set.len(),
            n_pos: set.n_pos(),
            auroc: auroc(s, y)?,
            auprc: auprc(s, y)?,
            brier: brier(s, y)?,
            ece: e,
            threshold,
            f1: c.f1,
            precision: c.precision,
            recall: c.recall,
            specificity: c.specificity,
            temperature: None,
            reliability,
            strata: stratify_by_missingness(set, &DEFAULT_BOUNDARIES),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(out, "samples      {} ({} positive)", self.n, self.n_pos);
        let _ = writeln!(out, "AUROC        {:.4}", self.auroc);
        let _ = writeln!(out, "AUPRC        {:.4}", self.auprc);
        let _ = writeln!(out, "Brier        {:.4}", self.brier);
        let _ = writeln!(out, "ECE          {:.4}", self.ece);
        if let Some(t) = self.temperature {
            let _ = writeln!(out, "temperature  {t:.4}");
        }
        let _ = writeln!(out, "threshold    {:.4}", self.threshold);
        let _ = writeln!(out, "F1           {:.4}", self.f1);
        let _ = writeln!(out, "precision    {:.4}", self.precision);
        let _ = writeln!(out, "recall       {:.4}", self.recall);
        let _ = writeln!(out, "specificity  {:.4}", self.specificity);
        let _ = writeln!(out, "\nmissingness  n        n_pos  rate     AUROC      AUPRC");
        for s in &self.strata {
            let _ = writeln!(
                out,
                "{:<12} {:<8} {:<6} {:<8} {:<10} {}",
                s.name,
                s.n,
                s.n_pos,
                opt(s.positive_rate),
                opt(s.auroc),
                opt(s.auprc)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        write_text(&dir.join(format!("{stem}.txt")), &self.to_text())?;
        write_text(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(self)?)
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn write_points(path: &Path, header: &str, pts: &[(f64, f64, f64)]) -> Result<(), EvalError> {
    let mut s = format!("{header}\n");
    for (a, b, t) in pts {
        let _ = writeln!(s, "{a},{b},{t}");
    }
    write_text(path, &s)
}

pub fn write_roc_csv(path: &Path, set: &ScoredSet) -> Result<(), EvalError> {
    write_points(path, "fpr,tpr,threshold", &roc_points(&set.score, &set.label)?)
}

pub fn write_pr_csv(path: &Path, set: &ScoredSet) -> Result<(), EvalError> {
    write_points(path, "recall,precision,threshold", &pr_points(&set.score, &set.label)?)
}

pub fn write_reliability_csv(path: &Path, bins: &[ReliabilityBin]) -> Result<(), EvalError> {
    let mut s = String::from("lower,upper,count,mean_score,frac_pos\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for b in bins {
        let _ = writeln!(s, "{},{},{},{},{}", b.lower, b.upper, b.count, cell(b.mean_score), cell(b.frac_pos));
    }
    write_text(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, n: usize) -> ScoredSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let label: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.2) as u8).collect();
        let logit = label.iter().map(|&y| rng.gen_range(-3.0..1.0) + y as f64).collect();
        let mut s = ScoredSet::from_logits(logit, label);
        s.missing_frac = (0..n).map(|_| rng.gen_range(0.3..1.0f64).min(1.0)).collect();
        s.missing_frac[0] = 1.0;
        s.missing_frac[1] = 0.8;
        s.missing_frac[2] = 0.5;
        s
    }

    #[test]
    fn strata_partition_and_match_filtered_recomputation() {
        let set = random_set(4, 3000);
        let strata = stratify_by_missingness(&set, &DEFAULT_BOUNDARIES);
        assert_eq!(strata.len(), 4);
        let overall = strata.last().unwrap();
        assert_eq!(strata[..3].iter().map(|s| s.n).sum::<usize>(), overall.n);
        assert_eq!(strata[..3].iter().map(|s| s.n_pos).sum::<usize>(), overall.n_pos);
        for s in &strata[..3] {
            let idx: Vec<usize> = (0..set.len())
                .filter(|&i| {
                    let m = set.missing_frac[i];
                    if s.upper == 1.0 {
                        (0.8..=1.0).contains(&m)
                    } else {
                        m >= s.lower && m < s.upper
                    }
                })
                .collect();
            let sub = set.subset(&idx);
            assert_eq!(s.n, idx.len());
            assert_eq!(s.auroc, Some(auroc(&sub.score, &sub.label).unwrap()));
            assert_eq!(s.auprc, Some(auprc(&sub.score, &sub.label).unwrap()));
        }
    }

    #[test]
    fn empty_stratum_is_undefined() {
        let mut set = random_set(5, 200);
        set.missing_frac.iter_mut().for_each(|m| *m = 0.9);
        let strata = stratify_by_missingness(&set, &DEFAULT_BOUNDARIES);
        assert_eq!(strata[1].n, 0);
        assert_eq!((strata[1].auroc, strata[1].positive_rate), (None, None));
        assert_eq!(strata[2].n, 200);
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let set = random_set(6, 500);
        let mut r = MetricsReport::compute(&set, 0.3).unwrap();
        r.temperature = Some(1.7);
        r.write(dir.path(), "test").unwrap();
        assert_eq!(MetricsReport::read_json(&dir.path().join("test.json")).unwrap(), r);
        let text = std::fs::read_to_string(dir.path().join("test.txt")).unwrap();
        assert!(text.contains("AUROC") && text.contains("overall"));
        write_roc_csv(&dir.path().join("roc.csv"), &set).unwrap();
        write_reliability_csv(&dir.path().join("rel.csv"), &r.reliability).unwrap();
        let rel = std::fs::read_to_string(dir.path().join("rel.csv")).unwrap();
        assert_eq!(rel.lines().count(), 11);
    }
}

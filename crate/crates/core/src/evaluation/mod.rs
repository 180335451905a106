//! Discrimination, calibration and threshold metrics over scored sample sets.

mod calibration;
mod metrics;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ids::StayId;
use crate::numkernel::ops::sigmoid;

pub use calibration::{apply_temperature, fit_temperature, temperature_nll, T_MAX, T_MIN, T_TOLERANCE};
pub use metrics::{
    auprc, auroc, best_f1_threshold, bin_index, brier, confusion_at, ece, pr_points, roc_points, Confusion,
    ReliabilityBin, ThresholdChoice, DEFAULT_BINS,
};
pub use report::{
    stratify_by_missingness, write_pr_csv, write_reliability_csv, write_roc_csv, MetricsReport, StratumReport,
    DEFAULT_BOUNDARIES,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("undefined metric: {0}")]
    Undefined(&'static str),
    #[error("{scores} scores but {labels} labels")]
    Length { scores: usize, labels: usize },
    #[error("{file}: {msg}")]
    Format { file: PathBuf, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scores, logits and labels of a set of samples, as parallel arrays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub stay_id: Vec<StayId>,
    pub t: Vec<u32>,
    pub score: Vec<f64>,
    pub logit: Vec<f64>,
    pub label: Vec<u8>,
    pub missing_frac: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    stay_id: u64,
    t: u32,
    score: f64,
    logit: f64,
    label: u8,
    missing_frac: f64,
}

impl ScoredSet {
    /// Builds a set from logits; scores are their sigmoids.
    pub fn from_logits(logit: Vec<f64>, label: Vec<u8>) -> Self {
        let n = logit.len();
        ScoredSet {
            stay_id: vec![StayId(0); n],
            t: vec![0; n],
            score: logit.iter().map(|&z| sigmoid(z)).collect(),
            logit,
            label,
            missing_frac: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.score.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.label.iter().filter(|&&y| y == 1).count()
    }

    /// The samples at `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> ScoredSet {
        ScoredSet {
            stay_id: idx.iter().map(|&i| self.stay_id[i]).collect(),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            score: idx.iter().map(|&i| self.score[i]).collect(),
            logit: idx.iter().map(|&i| self.logit[i]).collect(),
            label: idx.iter().map(|&i| self.label[i]).collect(),
            missing_frac: idx.iter().map(|&i| self.missing_frac[i]).collect(),
        }
    }

    pub fn auroc(&self) -> Result<f64, EvalError> {
        auroc(&self.score, &self.label)
    }

    pub fn auprc(&self) -> Result<f64, EvalError> {
        auprc(&self.score, &self.label)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.len() {
            w.serialize(ScoreRow {
                stay_id: self.stay_id[i].0,
                t: self.t[i],
                score: self.score[i],
                logit: self.logit[i],
                label: self.label[i],
                missing_frac: self.missing_frac[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut set = ScoredSet::default();
        for row in r.deserialize() {
            let row: ScoreRow = row?;
            if !(row.score.is_finite() && row.logit.is_finite()) || row.label > 1 {
                return Err(EvalError::Format {
                    file: path.to_path_buf(),
                    msg: format!("bad row for stay {} at t={}", row.stay_id, row.t),
                });
            }
            set.stay_id.push(StayId(row.stay_id));
            set.t.push(row.t);
            set.score.push(row.score);
            set.logit.push(row.logit);
            set.label.push(row.label);
            set.missing_frac.push(row.missing_frac);
        }
        Ok(set)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ScoredSet::from_logits(vec![-2.0, 0.5, 3.25], vec![0, 1, 1]);
        s.stay_id = vec![StayId(7), StayId(7), StayId(9)];
        s.t = vec![6, 7, 30];
        s.missing_frac = vec![0.1, 0.55, 0.9];
        let path = dir.path().join("scores.csv");
        s.write_csv(&path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("stay_id,t,score,logit,label,missing_frac\n"));
        assert_eq!(ScoredSet::read_csv(&path).unwrap(), s);
    }
}

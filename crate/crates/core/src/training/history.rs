//! Per-epoch training history as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    pub val_auprc: f64,
    pub lr: f64,
    pub seconds: f64,
}

pub fn write_history(path: &Path, records: &[EpochRecord]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

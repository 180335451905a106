//! Hourly prediction samples, note attachment and patient-level splits.
//!
//! A stay yields one sample per prediction hour `t ∈ 6..=min(48, ⌊LOS⌋)`.
//! The look-back window holds the 48 grid rows for hours `t−48 … t−1`, which
//! together cover data timestamped in `[intime + t − 48h, intime + t)`; rows
//! before admission are zero-padded with mask 0. The label is 1 iff an outcome
//! event falls in `(intime + t, intime + t + 24h]`.

mod dataset;
mod notes;
mod split;

use crate::catalog::N_CHANNELS;
use crate::featurize::HourlyGrid;
use crate::ids::{StayId, SubjectId};
use crate::ingest::{Gender, OutcomeEvent, OutcomeKind, StayMeta};
use crate::time::SECONDS_PER_HOUR;

pub use dataset::{Batch, Dataset, SampleRef, StayData};
pub use notes::{attach_note, read_embeddings, write_embeddings, NoteEmbedding, NoteIndex};
pub use split::{split_by_patient, Split, SplitAssignment, DEFAULT_RATIOS};

pub const WINDOW_HOURS: usize = 48;
pub const FIRST_PREDICTION_HOUR: u32 = 6;
pub const LAST_PREDICTION_HOUR: u32 = 48;
pub const HORIZON_HOURS: i64 = 24;
pub const EMBED_DIM: usize = 768;
pub const N_STATICS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("patients {0:?} appear in more than one split")]
    Leak(Vec<SubjectId>),
    #[error("subject {0} has no split assignment")]
    Unassigned(SubjectId),
    #[error("{file}: embedding dimension {found}, expected {expected}")]
    EmbeddingDim {
        file: String,
        found: usize,
        expected: usize,
    },
    #[error("{file}: {msg}")]
    Format { file: String, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prediction hours for a stay: `6..=min(48, ⌊LOS⌋)`.
pub fn enumerate_samples(stay: &StayMeta) -> std::ops::RangeInclusive<u32> {
    let whole_hours = ((stay.outtime - stay.intime) / SECONDS_PER_HOUR).max(0) as u32;
    FIRST_PREDICTION_HOUR..=whole_hours.min(LAST_PREDICTION_HOUR)
}

/// 1 iff some outcome lies in `(intime + t, intime + t + 24h]`.
///
/// A kind whose first event is at or before the prediction time has already
/// happened and never counts again.
pub fn label_sample(t: u32, outcomes: &[OutcomeEvent], stay: &StayMeta) -> u8 {
    let now = stay.intime.plus_hours(t as i64);
    let horizon = now.plus_hours(HORIZON_HOURS);
    OutcomeKind::ALL.iter().any(|&kind| {
        let first = outcomes
            .iter()
            .filter(|o| o.stay_id == stay.stay_id && o.kind == kind)
            .map(|o| o.time)
            .min();
        first.is_some_and(|time| time > now && time <= horizon)
    }) as u8
}

pub fn age_norm(age: f64) -> f64 {
    (age - 65.0) / 15.0
}

pub fn gender_flag(g: Gender) -> f64 {
    match g {
        Gender::M => 1.0,
        Gender::F => 0.0,
    }
}

/// Grid hour held by window row `r` at prediction hour `t`, if inside the stay.
#[inline]
pub fn window_hour(t: u32, row: usize) -> Option<usize> {
    let h = t as i64 - WINDOW_HOURS as i64 + row as i64;
    (h >= 0).then_some(h as usize)
}

/// Copies the look-back window into `values`/`mask` (`[48 × 26]`, row-major).
pub fn extract_window(grid: &HourlyGrid, t: u32, values: &mut [f64], mask: &mut [u8]) {
    for r in 0..WINDOW_HOURS {
        let dst = r * N_CHANNELS..(r + 1) * N_CHANNELS;
        match window_hour(t, r).filter(|&h| h < grid.n_hours) {
            Some(h) => {
                values[dst.clone()].copy_from_slice(grid.row(h));
                mask[dst].copy_from_slice(grid.mask_row(h));
            }
            None => {
                values[dst.clone()].fill(0.0);
                mask[dst].fill(0);
            }
        }
    }
}

/// One fully materialized prediction instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stay_id: StayId,
    pub subject_id: SubjectId,
    pub t: u32,
    /// `[48 × 26]`, row-major, oldest hour first.
    pub window: Vec<f64>,
    pub mask: Vec<u8>,
    pub note_embedding: Vec<f32>,
    pub has_note: u8,
    pub age_norm: f64,
    pub gender_flag: f64,
    pub label: u8,
    pub missing_frac: f64,
    pub split: Option<Split>,
}

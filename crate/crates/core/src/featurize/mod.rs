//! Hourly 26-channel grids: aggregation, carry-forward imputation and
//! train-split z-scoring.
//!
//! A grid moves through three stages. [`aggregate_hourly`] produces a raw grid
//! whose mask marks direct observations, [`impute`] carries values forward
//! within each channel's window, and [`normalize`] z-scores observed cells and
//! writes exact zeros into missing ones. Missing cells hold NaN before
//! normalization; the mask is always the source of truth.

mod cache;
mod normalize;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, CHANNELS, N_CHANNELS, TEMP_F_ITEM};
use crate::ids::StayId;
use crate::ingest::{RawEvent, StayMeta};
use crate::time::SECONDS_PER_HOUR;

pub use cache::{read_grid, write_grid, GRID_CACHE_VERSION};
pub use normalize::{fit_normalizer, normalize, NormalizationStats, STD_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum FeaturizeError {
    #[error("grid for stay {0} is already normalized")]
    AlreadyNormalized(StayId),
    #[error("grid for stay {stay} must be raw, found {stage:?}")]
    NotRaw { stay: StayId, stage: GridStage },
    #[error("cannot fit normalizer on an empty training split")]
    EmptyTrainingSplit,
    #[error("grid cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridStage {
    Raw,
    Imputed,
    Normalized,
}

impl GridStage {
    fn to_byte(self) -> u8 {
        match self {
            GridStage::Raw => 0,
            GridStage::Imputed => 1,
            GridStage::Normalized => 2,
        }
    }

    fn from_byte(b: u8) -> Option<GridStage> {
        match b {
            0 => Some(GridStage::Raw),
            1 => Some(GridStage::Imputed),
            2 => Some(GridStage::Normalized),
            _ => None,
        }
    }
}

/// Row-major `[n_hours × 26]` values with a parallel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyGrid {
    pub stay_id: StayId,
    pub n_hours: usize,
    pub values: Vec<f64>,
    pub mask: Vec<u8>,
    pub stage: GridStage,
}

impl HourlyGrid {
    pub fn empty(stay_id: StayId, n_hours: usize) -> Self {
        HourlyGrid {
            stay_id,
            n_hours,
            values: vec![f64::NAN; n_hours * N_CHANNELS],
            mask: vec![0; n_hours * N_CHANNELS],
            stage: GridStage::Raw,
        }
    }

    pub fn channel_names() -> [&'static str; N_CHANNELS] {
        catalog::channel_names()
    }

    #[inline]
    pub fn idx(h: usize, c: usize) -> usize {
        h * N_CHANNELS + c
    }

    pub fn value(&self, h: usize, c: usize) -> Option<f64> {
        let i = Self::idx(h, c);
        (self.mask[i] == 1).then_some(self.values[i])
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.values[h * N_CHANNELS..(h + 1) * N_CHANNELS]
    }

    pub fn mask_row(&self, h: usize) -> &[u8] {
        &self.mask[h * N_CHANNELS..(h + 1) * N_CHANNELS]
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Number of hourly rows for a stay: `ceil(LOS hours)`.
pub fn grid_hours(stay: &StayMeta) -> usize {
    let secs = stay.outtime - stay.intime;
    ((secs + SECONDS_PER_HOUR - 1) / SECONDS_PER_HOUR).max(0) as usize
}

/// Hourly means of direct observations in `[intime + h, intime + h + 1)`.
pub fn aggregate_hourly(events: &[RawEvent], stay: &StayMeta) -> HourlyGrid {
    let n_hours = grid_hours(stay);
    let mut grid = HourlyGrid::empty(stay.stay_id, n_hours);
    let mut sums = vec![0.0f64; n_hours * N_CHANNELS];
    let mut counts = vec![0u32; n_hours * N_CHANNELS];
    for ev in events {
        if ev.stay_id != stay.stay_id || ev.time < stay.intime || ev.time >= stay.outtime {
            continue;
        }
        let (Some(value), Some(c)) = (ev.value, catalog::channel_of(ev.item_id)) else {
            continue;
        };
        let value = if ev.item_id == TEMP_F_ITEM {
            catalog::fahrenheit_to_celsius(value)
        } else {
            value
        };
        let h = ((ev.time - stay.intime) / SECONDS_PER_HOUR) as usize;
        let i = HourlyGrid::idx(h, c);
        sums[i] += value;
        counts[i] += 1;
    }
    for i in 0..sums.len() {
        if counts[i] > 0 {
            grid.values[i] = sums[i] / counts[i] as f64;
            grid.mask[i] = 1;
        }
    }
    grid
}

/// Forward-fills each channel up to its carry window.
///
/// A value observed at hour `h0` fills hours `h` with `h - h0 <= window`
/// until the next direct observation.
pub fn impute(grid: &HourlyGrid) -> Result<HourlyGrid, FeaturizeError> {
    if grid.stage != GridStage::Raw {
        return Err(FeaturizeError::NotRaw {
            stay: grid.stay_id,
            stage: grid.stage,
        });
    }
    let mut out = grid.clone();
    for (c, ch) in CHANNELS.iter().enumerate() {
        let window = ch.carry_hours as usize;
        let mut last: Option<(usize, f64)> = None;
        for h in 0..grid.n_hours {
            let i = HourlyGrid::idx(h, c);
            if grid.mask[i] == 1 {
                last = Some((h, grid.values[i]));
            } else if let Some((h0, v)) = last {
                if h - h0 <= window {
                    out.values[i] = v;
                    out.mask[i] = 1;
                }
            }
        }
    }
    out.stage = GridStage::Imputed;
    Ok(out)
}

/// Aggregates and imputes one stay.
pub fn build_grid(events: &[RawEvent], stay: &StayMeta) -> HourlyGrid {
    impute(&aggregate_hourly(events, stay)).expect("fresh grid is raw")
}

//! Warmup-plus-cosine learning rate and patience-based early stopping.

use std::f64::consts::PI;

/// Learning rate for a 1-indexed epoch.
///
/// Epochs `1..=warmup` ramp linearly to `base` (`base·e/warmup`); the remaining
/// epochs follow a half cosine from `base` at the last warmup epoch down to
/// `floor` at `max_epochs`.
pub fn lr_at(epoch: usize, base: f64, floor: f64, warmup: usize, max_epochs: usize) -> f64 {
    assert!(epoch >= 1, "epochs are 1-indexed");
    if epoch <= warmup {
        return base * epoch as f64 / warmup as f64;
    }
    let span = max_epochs.saturating_sub(warmup);
    if span == 0 {
        return base;
    }
    let progress = ((epoch - warmup) as f64 / span as f64).min(1.0);
    floor + (base - floor) * 0.5 * (1.0 + (PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation score; only strict improvements count, so the
/// earliest of equal scores is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = match self.best {
            None => !score.is_nan(),
            Some((_, b)) => score > b,
        };
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

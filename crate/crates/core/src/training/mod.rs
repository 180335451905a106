//! Focal-loss training with warmup, cosine decay and early stopping.
//!
//! Each epoch draws a seeded permutation of the training samples (optionally
//! truncated to a fixed number of batches), runs forward, focal loss,
//! backward, global-norm clipping and one AdamW step per batch, then scores
//! the validation set in eval mode. The best-AUROC parameters are kept.

mod focal;
mod history;
mod schedule;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evaluation::{auprc, auroc, EvalError};
use crate::ids::StayId;
use crate::model::{Model, ModelError};
use crate::numkernel::{adamw_step, clip_global_norm, AdamWConfig, Checkpoint, NumError, ParameterSet, TrainingState};
use crate::sampler::{Batch, Dataset};
use crate::seed::{derive_indexed, derive_seed};

pub use focal::{focal_loss, focal_loss_and_grad, focal_loss_logits, focal_term, FocalParams};
pub use history::{read_history, write_history, EpochRecord};
pub use schedule::{lr_at, EarlyStopping, StopDecision};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; samples (stay:t) {}", fmt_samples(.samples))]
    NonFinite {
        epoch: usize,
        batch: usize,
        indices: Vec<usize>,
        samples: Vec<(StayId, u32)>,
    },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_samples(s: &[(StayId, u32)]) -> String {
    let shown: Vec<String> = s.iter().take(32).map(|(id, t)| format!("{id}:{t}")).collect();
    let more = if s.len() > 32 { format!(" (+{} more)", s.len() - 32) } else { String::new() };
    format!("{}{more}", shown.join(","))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub label_smoothing: f64,
    pub lr: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Caps an epoch at this many batches; `None` is a full pass.
    pub batches_per_epoch: Option<usize>,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.75,
            gamma: 2.0,
            label_smoothing: 0.05,
            lr: 2e-4,
            lr_floor: 1e-6,
            weight_decay: 1e-3,
            batch_size: 256,
            warmup_epochs: 3,
            max_epochs: 50,
            patience: 7,
            clip_norm: 1.0,
            seed: 42,
            batches_per_epoch: None,
            eval_batch_size: 512,
        }
    }
}

impl TrainConfig {
    pub fn focal(&self) -> FocalParams {
        FocalParams {
            alpha: self.alpha,
            gamma: self.gamma,
            smoothing: self.label_smoothing,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(epoch, self.lr, self.lr_floor, self.warmup_epochs, self.max_epochs)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if !(self.lr > 0.0 && self.lr_floor >= 0.0 && self.lr_floor <= self.lr) {
            return bad("need lr > 0 and 0 <= lr_floor <= lr");
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 || self.max_epochs == 0 {
            return bad("batch sizes and max_epochs must be positive");
        }
        if self.batches_per_epoch == Some(0) {
            return bad("batches_per_epoch must be positive");
        }
        if !(self.clip_norm > 0.0) || self.weight_decay < 0.0 {
            return bad("clip_norm must be positive and weight_decay non-negative");
        }
        Ok(())
    }

    /// `key=value` lines with a `train.` prefix.
    pub fn to_kv(&self) -> String {
        let bpe = self.batches_per_epoch.map_or("all".to_string(), |b| b.to_string());
        format!(
            "train.alpha={}\ntrain.gamma={}\ntrain.label_smoothing={}\ntrain.lr={}\ntrain.lr_floor={}\n\
             train.weight_decay={}\ntrain.batch_size={}\ntrain.warmup_epochs={}\ntrain.max_epochs={}\n\
             train.patience={}\ntrain.clip_norm={}\ntrain.seed={}\ntrain.batches_per_epoch={}\n\
             train.eval_batch_size={}\n",
            self.alpha,
            self.gamma,
            self.label_smoothing,
            self.lr,
            self.lr_floor,
            self.weight_decay,
            self.batch_size,
            self.warmup_epochs,
            self.max_epochs,
            self.patience,
            self.clip_norm,
            self.seed,
            bpe,
            self.eval_batch_size
        )
    }

    /// Applies one `train.*` key; returns false for keys outside the section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, TrainError> {
        let bad = || TrainError::Config(format!("bad value `{value}` for {key}"));
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let u = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match key {
            "train.alpha" => self.alpha = f(value)?,
            "train.gamma" => self.gamma = f(value)?,
            "train.label_smoothing" => self.label_smoothing = f(value)?,
            "train.lr" => self.lr = f(value)?,
            "train.lr_floor" => self.lr_floor = f(value)?,
            "train.weight_decay" => self.weight_decay = f(value)?,
            "train.batch_size" => self.batch_size = u(value)?,
            "train.warmup_epochs" => self.warmup_epochs = u(value)?,
            "train.max_epochs" => self.max_epochs = u(value)?,
            "train.patience" => self.patience = u(value)?,
            "train.clip_norm" => self.clip_norm = f(value)?,
            "train.seed" => self.seed = value.parse().map_err(|_| bad())?,
            "train.batches_per_epoch" => {
                self.batches_per_epoch = match value {
                    "all" | "" => None,
                    v => Some(u(v)?),
                }
            }
            "train.eval_batch_size" => self.eval_batch_size = u(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (no optimizer moments).
    pub best: Checkpoint,
    /// Final parameters with optimizer moments, for resuming.
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Where to persist progress while training.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub best_checkpoint: Option<PathBuf>,
    pub last_checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    /// Ends the run after this epoch as if interrupted; `last_checkpoint` resumes it.
    pub stop_after_epoch: Option<usize>,
}

/// Validation AUROC and AUPRC of `model` on `val`, dropout off, one pass.
pub fn validate_on(model: &Model<f32>, val: &Dataset, batch_size: usize) -> Result<(f64, f64), TrainError> {
    let logits = model.predict_all(val, batch_size)?;
    let labels = val.labels();
    Ok((auroc(&logits, &labels)?, auprc(&logits, &labels)?))
}

/// Samples of epoch `epoch` in training order.
pub fn epoch_order(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(derive_seed(cfg.seed, "shuffle"), &[epoch as u64]));
    idx.shuffle(&mut rng);
    if let Some(cap) = cfg.batches_per_epoch {
        idx.truncate(cap * cfg.batch_size);
    }
    idx
}

fn checkpoint_config(model: &Model<f32>, cfg: &TrainConfig) -> String {
    format!("{}{}", model.config.to_kv(), cfg.to_kv())
}

fn snapshot(model: &Model<f32>, cfg: &TrainConfig, state: TrainingState, moments: bool) -> Checkpoint {
    let mut c = Checkpoint::new(model.config.mode.as_str(), &model.params, state, checkpoint_config(model, cfg));
    c.include_moments = moments;
    c
}

/// Trains against the validation set `val`.
pub fn train(
    model: &mut Model<f32>,
    data: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
) -> Result<TrainOutcome, TrainError> {
    let bs = cfg.eval_batch_size;
    train_with(model, data, cfg, outputs, None, |m, _| validate_on(m, val, bs))
}

/// Training loop with a caller-supplied validation function
/// `(model, epoch) → (AUROC, AUPRC)`.
///
/// `resume` continues from a checkpoint that carries optimizer moments.
pub fn train_with(
    model: &mut Model<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
    resume: Option<&Checkpoint>,
    mut validate: impl FnMut(&Model<f32>, usize) -> Result<(f64, f64), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let focal = cfg.focal();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut start_epoch = 1;
    let mut best_params: Option<(usize, f64, ParameterSet<f32>)> = None;
    if let Some(ck) = resume {
        restore(model, ck)?;
        start_epoch = ck.state.epoch as usize + 1;
        stopper.best = Some((0, ck.state.best_val_auroc));
        stopper.since_best = ck.state.patience_counter as usize;
        best_params = Some((0, ck.state.best_val_auroc, model.params.clone()));
    }
    // A resumed run extends the history already on disk.
    let mut history = match (resume, &outputs.history) {
        (Some(ck), Some(path)) if path.exists() => read_history(path)?
            .into_iter()
            .filter(|r| r.epoch <= ck.state.epoch as usize)
            .collect(),
        _ => Vec::new(),
    };
    let mut batch = Batch::<f32>::default();
    let mut stopped_early = false;
    let mut last_epoch = start_epoch.saturating_sub(1);
    for epoch in start_epoch..=cfg.max_epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_indexed(derive_seed(cfg.seed, "dropout"), &[epoch as u64]));
        let order = epoch_order(data.len(), cfg, epoch);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            data.fill_batch(idx, &mut batch);
            let cache = model.forward(&batch, Some(&mut dropout_rng))?;
            let z: Vec<f64> = cache.logits.iter().map(|&v| v as f64).collect();
            let y: Vec<u8> = batch.labels.iter().map(|&v| (v > 0.5) as u8).collect();
            let (loss, dz) = focal_loss_and_grad(&z, &y, &focal);
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    indices: idx.to_vec(),
                    samples: idx.iter().map(|&i| (data.stay_of(i).meta.stay_id, data.index[i].t)).collect(),
                });
            }
            let dz: Vec<f32> = dz.iter().map(|&g| g as f32).collect();
            let grads = model.backward(&batch, &cache, &dz);
            model.params.install_grads(grads)?;
            clip_global_norm(&mut model.params, cfg.clip_norm)?;
            adamw_step(&mut model.params, lr, &adam)?;
            loss_sum += loss;
            n_batches += 1;
            log::trace!("epoch {epoch} batch {bi}: loss {loss:.5}");
        }
        model.params.clear_grads();
        let (val_auroc, val_auprc) = validate(model, epoch)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches.max(1) as f64,
            val_auroc,
            val_auprc,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} val AUROC {:.4} AUPRC {:.4} lr {:.3e} ({:.1}s)",
            record.train_loss,
            val_auroc,
            val_auprc,
            lr,
            record.seconds
        );
        history.push(record);
        last_epoch = epoch;
        let decision = stopper.update(epoch, val_auroc);
        let state = TrainingState {
            epoch: epoch as u32,
            best_val_auroc: stopper.best.map_or(f64::NAN, |b| b.1),
            patience_counter: stopper.since_best as u32,
        };
        if decision == StopDecision::Improved {
            best_params = Some((epoch, val_auroc, model.params.clone()));
            if let Some(path) = &outputs.best_checkpoint {
                snapshot(model, cfg, state, false).save(path)?;
            }
        }
        if let Some(path) = &outputs.last_checkpoint {
            snapshot(model, cfg, state, true).save(path)?;
        }
        if let Some(path) = &outputs.history {
            write_history(path, &history)?;
        }
        if outputs.stop_after_epoch == Some(epoch) {
            log::info!("stopping after epoch {epoch} as requested");
            break;
        }
        if decision == StopDecision::Stop {
            stopped_early = true;
            log::info!("early stop after epoch {epoch}; best epoch {:?}", stopper.best.map(|b| b.0));
            break;
        }
    }
    let state = TrainingState {
        epoch: last_epoch as u32,
        best_val_auroc: stopper.best.map_or(f64::NAN, |b| b.1),
        patience_counter: stopper.since_best as u32,
    };
    let last = snapshot(model, cfg, state, true);
    let (best_epoch, best_auroc, params) = best_params.unwrap_or_else(|| (last_epoch, f64::NAN, model.params.clone()));
    let mut best_model = model.clone();
    best_model.params = params;
    let best = snapshot(
        &best_model,
        cfg,
        TrainingState {
            epoch: best_epoch as u32,
            best_val_auroc: best_auroc,
            patience_counter: 0,
        },
        false,
    );
    Ok(TrainOutcome {
        best,
        last,
        history,
        best_epoch,
        stopped_early,
    })
}

/// Loads parameters and optimizer moments from a checkpoint into `model`.
pub fn restore(model: &mut Model<f32>, ck: &Checkpoint) -> Result<(), TrainError> {
    let loaded = Model::<f32>::from_parameters(model.config.clone(), &ck.params)?;
    model.params = loaded.params;
    if ck.include_moments {
        for id in model.params.ids().collect::<Vec<_>>() {
            let (m, v) = ck.params.moments(id);
            model.params.set_moments(id, m.to_vec(), v.to_vec())?;
        }
        model.params.set_step(ck.params.step());
    }
    Ok(())
}

/// Reads a checkpoint written by [`train`] and rebuilds its model.
pub fn load_model(path: &Path) -> Result<(Model<f32>, Checkpoint), TrainError> {
    let ck = Checkpoint::load(path)?;
    let config = crate::model::ModelConfig::from_kv(&ck.config)?;
    let model = Model::from_parameters(config, &ck.params)?;
    Ok((model, ck))
}

#[cfg(test)]
mod tests;

//! Trains a small multimodal network, then evaluates it on the test split:
//! threshold from validation, full report with missingness strata, and
//! temperature scaling. The best checkpoint is saved and reloaded.
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- [mode]
//! ```

use icu_deterioration::evaluation::{apply_temperature, best_f1_threshold, fit_temperature, MetricsReport, ScoredSet};
use icu_deterioration::model::{Mode, Model, ModelConfig};
use icu_deterioration::pipeline::{prepare_dir, DataConfig};
use icu_deterioration::sampler::Dataset;
use icu_deterioration::synth::{generate, SynthConfig};
use icu_deterioration::training::{load_model, train, TrainConfig, TrainOutputs};

fn scored(model: &Model<f32>, data: &Dataset) -> ScoredSet {
    let logits = model.predict_all(data, 512).expect("predict");
    let mut set = ScoredSet::from_logits(logits, data.labels());
    set.missing_frac = data.missing_fracs();
    set
}

fn main() {
    let mode: Mode = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(Mode::Multimodal);
    let work = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig {
        n_patients: 600,
        event_rate: 0.05,
        text_strength: 0.3,
        ..SynthConfig::default()
    };
    generate(&synth, work.path()).expect("synth");
    let prepared = prepare_dir(work.path(), None, &DataConfig::default()).expect("pipeline");

    let model_cfg = ModelConfig {
        lstm_hidden: 32,
        proj_dim: if mode == Mode::Multimodal { 64 } else { 32 },
        clf_hidden: 32,
        mode,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        lr: 1e-3,
        warmup_epochs: 1,
        max_epochs: 3,
        batch_size: 32,
        batches_per_epoch: Some(100),
        ..TrainConfig::default()
    };
    let ckpt = work.path().join("best.ckpt");
    let outputs = TrainOutputs {
        best_checkpoint: Some(ckpt.clone()),
        ..TrainOutputs::default()
    };
    let mut model = Model::<f32>::new(model_cfg, 1).expect("model");
    let outcome = train(&mut model, &prepared.train, &prepared.val, &cfg, &outputs).expect("train");
    for r in &outcome.history {
        println!("epoch {} loss {:.4} val AUROC {:.4}", r.epoch, r.train_loss, r.val_auroc);
    }

    let (best, _) = load_model(&ckpt).expect("reload");
    let val = scored(&best, &prepared.val);
    let test = scored(&best, &prepared.test);
    let threshold = best_f1_threshold(&val.score, &val.label).expect("threshold").threshold;
    let report = MetricsReport::compute(&test, threshold).expect("report");
    print!("\n{}", report.to_text());

    let t = fit_temperature(&val).expect("temperature");
    let calibrated = MetricsReport::compute(&apply_temperature(&test, t), threshold).expect("report");
    println!("\ntemperature {t:.3}: ECE {:.4} -> {:.4}", report.ece, calibrated.ece);
}

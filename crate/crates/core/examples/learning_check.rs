//! Trains the structured-only network and the logistic baseline on a fresh
//! synthetic cohort and prints validation AUROC per epoch.
//!
//! ```text
//! cargo run --release --example learning_check -- [section.key=value ...]
//! ```
//!
//! Keys use the `synth.`, `model.`, `train.` and `data.` prefixes of the CLI
//! config, e.g. `synth.structured_strength=2 train.batches_per_epoch=100`.

use std::time::Instant;

use icu_deterioration::baseline::{summarize_dataset, train_logreg, LogregOptions, N_FEATURES};
use icu_deterioration::evaluation::auroc;
use icu_deterioration::model::{Mode, Model, ModelConfig};
use icu_deterioration::pipeline::{prepare_dir, DataConfig};
use icu_deterioration::synth::{generate, SynthConfig};
use icu_deterioration::training::{train, TrainConfig, TrainOutputs};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut synth = SynthConfig {
        event_rate: 0.03,
        structured_strength: 2.0,
        text_strength: 0.0,
        ..SynthConfig::default()
    };
    let mut model_cfg = ModelConfig::default().with_mode(Mode::StructuredOnly);
    let mut train_cfg = TrainConfig {
        lr: 1e-3,
        warmup_epochs: 1,
        max_epochs: 5,
        batch_size: 32,
        batches_per_epoch: Some(400),
        ..TrainConfig::default()
    };
    let mut data = DataConfig::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("arguments are key=value");
        let known = synth.set(k, v).expect("synth value")
            || model_cfg.set(k, v).expect("model value")
            || train_cfg.set(k, v).expect("train value")
            || data.set(k, v).expect("data value");
        assert!(known, "unknown key {k}");
    }
    let started = Instant::now();
    let dir = tempfile::tempdir().expect("temp dir");
    generate(&synth, dir.path()).expect("synth");
    let prepared = prepare_dir(dir.path(), None, &data).expect("pipeline");
    println!(
        "data ready in {:.1?}: train {} (prev {:.4}), val {} (prev {:.4})",
        started.elapsed(),
        prepared.train.len(),
        prepared.train.prevalence(),
        prepared.val.len(),
        prepared.val.prevalence()
    );

    let t = Instant::now();
    let (x, y) = summarize_dataset(&prepared.train);
    let opts = LogregOptions {
        max_iter: 400,
        tol: 1e-6,
        ..LogregOptions::default()
    };
    let fit = train_logreg(&x, &y, N_FEATURES, &opts).expect("logreg");
    let (xv, yv) = summarize_dataset(&prepared.val);
    let lr_auc = auroc(&fit.model.logits(&xv), &yv).expect("both classes");
    println!("logreg val AUROC {lr_auc:.4} ({} iterations, {:.1?})", fit.iterations, t.elapsed());

    let t = Instant::now();
    let mut model = Model::<f32>::new(model_cfg, train_cfg.seed).expect("model");
    let outcome = train(&mut model, &prepared.train, &prepared.val, &train_cfg, &TrainOutputs::default()).expect("train");
    for r in &outcome.history {
        println!("epoch {} loss {:.5} val AUROC {:.4} lr {:.2e} {:.1}s", r.epoch, r.train_loss, r.val_auroc, r.lr, r.seconds);
    }
    println!("network trained in {:.1?}; total {:.1?}", t.elapsed(), started.elapsed());
}

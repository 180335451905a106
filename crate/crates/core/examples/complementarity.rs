//! Measures what the notes add: test AUROC of multimodal against
//! structured-only on cohorts with an independent text signal, and text-only
//! on a cohort whose notes carry nothing.
//!
//! ```text
//! cargo run --release --example complementarity -- [seeds=3] [section.key=value ...]
//! ```

use std::time::Instant;

use icu_deterioration::evaluation::auroc;
use icu_deterioration::model::{Mode, Model, ModelConfig};
use icu_deterioration::pipeline::{prepare_dir, DataConfig, Prepared};
use icu_deterioration::seed::derive_seed;
use icu_deterioration::synth::{generate, SynthConfig};
use icu_deterioration::training::{train, TrainConfig, TrainOutputs};

fn test_auroc(mode: Mode, prepared: &Prepared, model_cfg: &ModelConfig, cfg: &TrainConfig) -> f64 {
    let mut model = Model::<f32>::new(model_cfg.clone().with_mode(mode), derive_seed(cfg.seed, "init")).expect("model");
    let out = train(&mut model, &prepared.train, &prepared.val, cfg, &TrainOutputs::default()).expect("train");
    let curve: Vec<String> = out.history.iter().map(|r| format!("{:.3}", r.val_auroc)).collect();
    log::info!("{} val AUROC by epoch: {}", mode.as_str(), curve.join(" "));
    let logits = model.predict_all(&prepared.test, cfg.eval_batch_size).expect("predict");
    auroc(&logits, &prepared.test.labels()).expect("both classes")
}

fn prepare(synth: &SynthConfig) -> Prepared {
    let dir = tempfile::tempdir().expect("temp dir");
    generate(synth, dir.path()).expect("synth");
    let data = DataConfig {
        split_seed: derive_seed(synth.seed, "split"),
        ..DataConfig::default()
    };
    prepare_dir(dir.path(), None, &data).expect("pipeline")
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut seeds = 3u64;
    let mut diagnose = false;
    let mut synth = SynthConfig {
        n_patients: 3000,
        event_rate: 0.05,
        structured_strength: 1.0,
        text_strength: 0.3,
        text_hazard_weight: 32f64.ln(),
        ..SynthConfig::default()
    };
    let mut model_cfg = ModelConfig {
        lstm_hidden: 32,
        proj_dim: 64,
        clf_hidden: 32,
        ..ModelConfig::default()
    };
    let mut train_cfg = TrainConfig {
        lr: 1e-3,
        warmup_epochs: 1,
        max_epochs: 4,
        batch_size: 32,
        batches_per_epoch: Some(200),
        ..TrainConfig::default()
    };
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("arguments are key=value");
        if k == "seeds" {
            seeds = v.parse().expect("seed count");
            continue;
        }
        if k == "diagnose" {
            diagnose = v == "1";
            continue;
        }
        let known = synth.set(k, v).expect("synth value")
            || model_cfg.set(k, v).expect("model value")
            || train_cfg.set(k, v).expect("train value");
        assert!(known, "unknown key {k}");
    }

    let started = Instant::now();
    let (mut gain, mut text_only) = (0.0, 0.0);
    for s in 0..seeds {
        let cfg = TrainConfig { seed: s, ..train_cfg.clone() };
        let with_text = prepare(&SynthConfig { seed: 100 + s, ..synth.clone() });
        let multi = test_auroc(Mode::Multimodal, &with_text, &model_cfg, &cfg);
        let structured = test_auroc(Mode::StructuredOnly, &with_text, &model_cfg, &cfg);
        if diagnose {
            let t = test_auroc(Mode::TextOnly, &with_text, &model_cfg, &cfg);
            println!("seed {s}: text_only with signal {t:.4}");
        }
        let silent = prepare(&SynthConfig {
            seed: 200 + s,
            text_strength: 0.0,
            ..synth.clone()
        });
        let text = test_auroc(Mode::TextOnly, &silent, &model_cfg, &cfg);
        println!(
            "seed {s}: multimodal {multi:.4} structured_only {structured:.4} text_only(no signal) {text:.4} [{:.0?}]",
            started.elapsed()
        );
        gain += (multi - structured) / seeds as f64;
        text_only += text / seeds as f64;
    }
    println!("mean gain {gain:.4}; mean text_only {text_only:.4}; {:.1?}", started.elapsed());
}

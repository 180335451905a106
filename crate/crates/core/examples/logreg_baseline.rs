//! Fits the logistic-regression baseline on window summary features and
//! reports validation and test AUROC.
//!
//! ```text
//! cargo run --release --example logreg_baseline -- [n_patients] [l2]
//! ```

use icu_deterioration::baseline::{summarize_dataset, train_logreg, LogregOptions, N_FEATURES};
use icu_deterioration::evaluation::auroc;
use icu_deterioration::pipeline::{prepare_dir, DataConfig};
use icu_deterioration::synth::{generate, SynthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(800);
    let l2: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let dir = tempfile::tempdir().expect("temp dir");
    generate(&SynthConfig { n_patients: n, ..SynthConfig::default() }, dir.path()).expect("synth");
    let prepared = prepare_dir(dir.path(), None, &DataConfig::default()).expect("pipeline");

    let (x, y) = summarize_dataset(&prepared.train);
    let opts = LogregOptions {
        l2,
        max_iter: 400,
        tol: 1e-6,
    };
    let fit = train_logreg(&x, &y, N_FEATURES, &opts).expect("fit");
    println!(
        "{} training samples × {N_FEATURES} features: {} iterations, loss {:.5}, |grad| {:.2e}, converged {}",
        y.len(),
        fit.iterations,
        fit.loss,
        fit.grad_norm,
        fit.converged
    );
    for (name, data) in [("val", &prepared.val), ("test", &prepared.test)] {
        let (x, y) = summarize_dataset(data);
        println!("{name} AUROC {:.4}", auroc(&fit.model.logits(&x), &y).expect("both classes"));
    }
}

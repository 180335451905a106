//! Generates a synthetic cohort bundle and checks its planted signal.
//!
//! ```text
//! cargo run --release --example synth_bundle -- <out_dir> [n_patients] [structured_strength] [text_strength]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use icu_deterioration::synth::{generate, verify_signal, SynthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synth_bundle".into()));
    let mut cfg = SynthConfig::default();
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        cfg.n_patients = n;
    }
    if let Some(s) = args.next().and_then(|s| s.parse().ok()) {
        cfg.structured_strength = s;
    }
    if let Some(s) = args.next().and_then(|s| s.parse().ok()) {
        cfg.text_strength = s;
    }
    let start = Instant::now();
    let summary = generate(&cfg, &dir).expect("generation failed");
    println!(
        "{} patients, {} stays ({} probes), events [mortality, vasopressor, ventilation] = {:?}, {} notes",
        summary.n_patients, summary.n_stays, summary.n_probe_stays, summary.n_events, summary.n_notes
    );
    println!(
        "baseline hazard {:.3e}/h, expected prevalence {:.4}, written in {:.1?}",
        summary.base_hazard,
        summary.expected_prevalence,
        start.elapsed()
    );
    let start = Instant::now();
    let report = verify_signal(&dir, 0.1).expect("verification failed");
    print!("{}", report.to_text());
    println!("verified in {:.1?}", start.elapsed());
}

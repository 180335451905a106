//! Ingests a directory of event tables and summarizes the cohort: table
//! health, exclusions by rule and outcomes by kind.
//!
//! ```text
//! cargo run --release --example ingest_cohort -- [tables_dir]
//! ```
//!
//! Without a directory, a 300-patient synthetic bundle is generated first.

use std::collections::BTreeMap;
use std::path::PathBuf;

use icu_deterioration::ingest::ingest_dir;
use icu_deterioration::synth::{generate, SynthConfig};

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let cfg = SynthConfig {
                n_patients: 300,
                probe_fraction: 0.05,
                ..SynthConfig::default()
            };
            generate(&cfg, scratch.path()).expect("synth");
            scratch.path().to_path_buf()
        }
    };
    let (cohort, report) = ingest_dir(&dir).expect("ingest");
    for t in &report.tables {
        println!(
            "{:<22} {:>8} rows {:>4} malformed {:>5} unknown items",
            t.file.file_name().unwrap_or_default().to_string_lossy(),
            t.rows,
            t.malformed,
            t.unknown_items
        );
    }
    println!("\n{} stays from {} patients kept, {} excluded", cohort.stays.len(), cohort.n_patients(), cohort.exclusion_log.len());
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &cohort.exclusion_log {
        *reasons.entry(e.reason.as_str()).or_default() += 1;
    }
    for (r, n) in reasons {
        println!("  excluded {r:<22} {n}");
    }
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for o in cohort.outcomes.values().flatten() {
        *kinds.entry(o.kind.as_str()).or_default() += 1;
    }
    for (k, n) in kinds {
        println!("  outcome {k:<23} {n}");
    }
}

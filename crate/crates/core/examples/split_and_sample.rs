//! Splits a synthetic cohort by patient, builds the sliding-window samples and
//! writes an audit file per split.
//!
//! ```text
//! cargo run --release --example split_and_sample -- [out_dir]
//! ```

use std::path::PathBuf;

use icu_deterioration::pipeline::{prepare_dir, DataConfig};
use icu_deterioration::sampler::Split;
use icu_deterioration::synth::{generate, SynthConfig};

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "split_and_sample".into()));
    std::fs::create_dir_all(&out).expect("output dir");
    let bundle = tempfile::tempdir().expect("temp dir");
    generate(&SynthConfig { n_patients: 400, ..SynthConfig::default() }, bundle.path()).expect("synth");
    let prepared = prepare_dir(bundle.path(), None, &DataConfig::default()).expect("pipeline");

    println!("split  patients  stays  samples  positives  prevalence  with note");
    for split in Split::ALL {
        let d = prepared.get(split);
        let noted = d.index.iter().filter(|r| r.note.is_some()).count();
        println!(
            "{:<6} {:>8} {:>6} {:>8} {:>10} {:>11.4} {:>9.1}%",
            split.as_str(),
            prepared.split.subjects(split).len(),
            d.stays.len(),
            d.len(),
            d.n_positive(),
            d.prevalence(),
            100.0 * noted as f64 / d.len().max(1) as f64
        );
        d.write_audit(&out.join(format!("audit_{}.csv", split.as_str()))).expect("audit");
    }
    let s = prepared.train.sample(0);
    println!(
        "\nfirst training sample: stay {} t={} label {} window {}×{} missing {:.2} note {}",
        s.stay_id,
        s.t,
        s.label,
        icu_deterioration::sampler::WINDOW_HOURS,
        s.window.len() / icu_deterioration::sampler::WINDOW_HOURS,
        s.missing_frac,
        s.has_note
    );
    prepared.split.write_manifest(&out.join("split.csv")).expect("manifest");
    println!("audit files and split manifest in {}", out.display());
}

//! Builds the hourly grid of one synthetic stay and shows it before and
//! after normalization.
//!
//! ```text
//! cargo run --release --example hourly_grid -- [hours_to_show]
//! ```

use icu_deterioration::featurize::{aggregate_hourly, build_grid, fit_normalizer, normalize, HourlyGrid};
use icu_deterioration::ingest::ingest_dir;
use icu_deterioration::synth::{generate, SynthConfig};

fn main() {
    let show: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let dir = tempfile::tempdir().expect("temp dir");
    generate(&SynthConfig { n_patients: 50, ..SynthConfig::default() }, dir.path()).expect("synth");
    let (cohort, _) = ingest_dir(dir.path()).expect("ingest");

    let grids: Vec<HourlyGrid> = cohort.stays.iter().map(|s| build_grid(cohort.events.events(s.stay_id), s)).collect();
    let stats = fit_normalizer(&grids.iter().collect::<Vec<_>>()).expect("normalizer");

    let stay = &cohort.stays[0];
    let raw = aggregate_hourly(cohort.events.events(stay.stay_id), stay);
    let grid = &grids[0];
    let z = normalize(grid, &stats).expect("normalize");
    println!(
        "stay {}: {} hours, {} of {} cells observed before imputation, {} after",
        stay.stay_id,
        grid.n_hours,
        raw.n_observed(),
        raw.values.len(),
        grid.n_observed()
    );
    let names = HourlyGrid::channel_names();
    for c in 0..4 {
        let cells: Vec<String> = (0..show.min(grid.n_hours))
            .map(|h| match grid.value(h, c) {
                Some(v) => format!("{v:7.1}/{:+.2}", z.values[HourlyGrid::idx(h, c)]),
                None => format!("{:>13}", "·"),
            })
            .collect();
        println!("{:<14} {}", names[c], cells.join(" "));
    }
    println!("(value/z-score per hour; · is still missing after forward fill)");
}

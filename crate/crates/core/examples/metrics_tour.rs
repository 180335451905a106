//! Discrimination, threshold and calibration metrics on a simulated,
//! deliberately overconfident scorer.
//!
//! ```text
//! cargo run --release --example metrics_tour -- [n] [overconfidence]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use icu_deterioration::evaluation::{
    apply_temperature, best_f1_threshold, confusion_at, ece, fit_temperature, ScoredSet, DEFAULT_BINS,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let scale: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // True logits z; the scorer reports scale·z.
    let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) - 2.0).collect();
    let y: Vec<u8> = z.iter().map(|&v| (rng.gen::<f64>() < 1.0 / (1.0 + (-v).exp())) as u8).collect();
    let set = ScoredSet::from_logits(z.iter().map(|v| scale * v).collect(), y);

    println!("n {} positives {}", set.len(), set.n_pos());
    println!("AUROC {:.4}  AUPRC {:.4}", set.auroc().unwrap(), set.auprc().unwrap());
    let choice = best_f1_threshold(&set.score, &set.label).unwrap();
    let c = confusion_at(&set.score, &set.label, choice.threshold).unwrap();
    println!(
        "best F1 {:.4} at {:.4}: precision {:.3} recall {:.3} specificity {:.3}",
        choice.f1, choice.threshold, c.precision, c.recall, c.specificity
    );

    let (before, bins) = ece(&set.score, &set.label, DEFAULT_BINS).unwrap();
    println!("\nreliability (bin, count, mean score, positive fraction)");
    for b in bins.iter().filter(|b| b.count > 0) {
        println!(
            "  [{:.1},{:.1}) {:>6} {:.3} {:.3}",
            b.lower,
            b.upper,
            b.count,
            b.mean_score.unwrap(),
            b.frac_pos.unwrap()
        );
    }
    let t = fit_temperature(&set).unwrap();
    let cal = apply_temperature(&set, t);
    let after = ece(&cal.score, &cal.label, DEFAULT_BINS).unwrap().0;
    println!("\ntemperature {t:.3} (true overconfidence {scale}); ECE {before:.4} -> {after:.4}");
    println!("AUROC after scaling {:.4} (unchanged)", cal.auroc().unwrap());
}

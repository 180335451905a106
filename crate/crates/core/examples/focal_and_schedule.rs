//! Prints the learning-rate schedule and how the focal loss reweights easy
//! and hard examples relative to cross-entropy.
//!
//! ```text
//! cargo run --release --example focal_and_schedule
//! ```

use icu_deterioration::training::{focal_loss, FocalParams, TrainConfig};

fn main() {
    let cfg = TrainConfig::default();
    println!("epoch  lr");
    for e in [1, 2, 3, 4, 10, 25, 40, 49, 50] {
        println!("{e:>5}  {:.3e}", cfg.lr_at(e));
    }

    let focal = cfg.focal();
    let bce = FocalParams {
        alpha: 0.5,
        gamma: 0.0,
        smoothing: 0.0,
    };
    println!("\np(y=1)  focal(y=1)       BCE(y=1)  focal(y=0)");
    for p in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
        println!(
            "{p:>6}  {:>10.5}  {:>14.5}  {:>10.5}",
            focal_loss(&[p], &[1], &focal),
            2.0 * focal_loss(&[p], &[1], &bce),
            focal_loss(&[p], &[0], &focal)
        );
    }
}

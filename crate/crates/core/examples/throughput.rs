//! Times forward and backward passes of the default network on random inputs.
//!
//! ```text
//! cargo run --release --example throughput -- [batch] [mode]
//! ```

use std::time::Instant;

use icu_deterioration::model::{Mode, Model, ModelConfig};
use icu_deterioration::sampler::{Batch, WINDOW_HOURS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let b: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let mode: Mode = args.next().and_then(|s| s.parse().ok()).unwrap_or(Mode::Multimodal);
    let cfg = ModelConfig::default().with_mode(mode);
    let model = Model::<f32>::new(cfg.clone(), 0).expect("valid default config");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = Batch {
        size: b,
        window: (0..WINDOW_HOURS * b * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        text: (0..b * cfg.text_in).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        has_note: vec![1.0; b],
        statics: vec![0.5; b * 3],
        labels: vec![0.0; b],
    };
    println!("{mode}: {} parameters, batch {b}", model.n_parameters());
    let reps = 5;
    let start = Instant::now();
    for _ in 0..reps {
        model.forward(&batch, None).expect("forward");
    }
    let fwd = start.elapsed().as_secs_f64() / reps as f64;
    let start = Instant::now();
    for _ in 0..reps {
        let cache = model.forward(&batch, Some(&mut rng)).expect("forward");
        let d = vec![1.0 / b as f32; b];
        std::hint::black_box(model.backward(&batch, &cache, &d));
    }
    let step = start.elapsed().as_secs_f64() / reps as f64;
    println!("eval forward  {:8.2} ms/batch  {:8.0} samples/s", fwd * 1e3, b as f64 / fwd);
    println!("train step    {:8.2} ms/batch  {:8.0} samples/s", step * 1e3, b as f64 / step);
}

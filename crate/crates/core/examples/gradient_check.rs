//! Verifies the hand-written backward pass of a small network against
//! central finite differences in 64-bit, parameter by parameter.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use icu_deterioration::model::{Mode, Model, ModelConfig};
use icu_deterioration::numkernel::gradcheck::max_rel_error;
use icu_deterioration::sampler::Batch;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for mode in Mode::ALL {
        let cfg = ModelConfig {
            input_dim: 5,
            lstm_hidden: 4,
            lstm_layers: 2,
            text_in: 6,
            proj_dim: 8,
            clf_hidden: 5,
            mode,
            ..ModelConfig::default()
        };
        let model = Model::<f64>::new(cfg.clone(), seed).expect("model");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, t_len) = (2, 4);
        let batch = Batch {
            size: b,
            window: (0..t_len * b * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            text: (0..b * cfg.text_in).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            has_note: vec![1.0; b],
            statics: (0..b * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            labels: vec![0.0; b],
        };
        let r: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &Model<f64>| {
            let mut d = ChaCha8Rng::seed_from_u64(seed);
            let c = m.forward(&batch, Some(&mut d)).expect("forward");
            c.logits.iter().zip(&r).map(|(z, w)| z * w).sum::<f64>()
        };
        let mut d = ChaCha8Rng::seed_from_u64(seed);
        let cache = model.forward(&batch, Some(&mut d)).expect("forward");
        let grads = model.backward(&batch, &cache, &r);
        println!("{mode}");
        for id in model.params.ids() {
            let e = max_rel_error(grads.get(id), model.params.value(id), |v| {
                let mut q = model.clone();
                q.params.value_mut(id).copy_from_slice(v);
                loss(&q)
            });
            println!("  {:<16} {:>5} values  max rel err {e:.2e}", model.params.name(id), model.params.value(id).len());
        }
    }
}

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numkernel::gradcheck::max_rel_error;

fn small(mode: Mode) -> ModelConfig {
    ModelConfig {
        input_dim: 4,
        lstm_hidden: 3,
        lstm_layers: 2,
        dropout: 0.25,
        text_in: 5,
        proj_dim: if mode == Mode::Multimodal { 6 } else { 4 },
        fusion_hidden: 0,
        clf_hidden: 4,
        attention_heads: 1,
        mode,
    }
}

fn random_batch(cfg: &ModelConfig, t_len: usize, b: usize, rng: &mut ChaCha8Rng) -> Batch<f64> {
    let has_note: Vec<f64> = (0..b).map(|i| (i % 3 != 2) as u8 as f64).collect();
    let mut text: Vec<f64> = (0..b * cfg.text_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for (i, &h) in has_note.iter().enumerate() {
        if h == 0.0 {
            text[i * cfg.text_in..(i + 1) * cfg.text_in].fill(0.0);
        }
    }
    let mut statics = Vec::new();
    for &h in &has_note {
        statics.extend([rng.gen_range(-1.0..1.0), rng.gen_range(0..2) as f64, h]);
    }
    Batch {
        size: b,
        window: (0..t_len * b * cfg.input_dim).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        text,
        has_note,
        statics,
        labels: vec![0.0; b],
    }
}

#[test]
fn default_parameter_count() {
    let m = Model::<f32>::new(ModelConfig::default(), 0).unwrap();
    assert_eq!(m.n_parameters(), 898_113);
    let s = Model::<f32>::new(ModelConfig::default().with_mode(Mode::StructuredOnly), 0).unwrap();
    assert_eq!(s.n_parameters(), 158_720 + 394_240 + 256 + 16_705);
    assert!(s.params.id("gate.w").is_none() && s.params.id("text.w").is_none());
    let t = Model::<f32>::new(ModelConfig::default().with_mode(Mode::TextOnly), 0).unwrap();
    assert!(t.params.names().iter().all(|n| !n.starts_with("lstm") && !n.starts_with("attn")));
}

fn check_mode(mode: Mode, seeds: std::ops::Range<u64>, tol: f64) {
    for seed in seeds {
        let cfg = small(mode);
        let model = Model::<f64>::new(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let batch = random_batch(&cfg, 3, 3, &mut rng);
        let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &Model<f64>| {
            let mut d = ChaCha8Rng::seed_from_u64(seed);
            let c = m.forward(&batch, Some(&mut d)).unwrap();
            c.logits.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut d = ChaCha8Rng::seed_from_u64(seed);
        let cache = model.forward(&batch, Some(&mut d)).unwrap();
        let g = model.backward(&batch, &cache, &r);
        for id in model.params.ids() {
            let base = model.params.value(id).to_vec();
            let e = max_rel_error(g.get(id), &base, |v| {
                let mut q = model.clone();
                q.params.value_mut(id).copy_from_slice(v);
                loss(&q)
            });
            assert!(e < tol, "{mode} {} seed {seed}: {e}", model.params.name(id));
        }
    }
}

#[test]
fn multimodal_gradients() {
    check_mode(Mode::Multimodal, 0..20, 1e-4);
}

#[test]
fn structured_only_gradients() {
    check_mode(Mode::StructuredOnly, 0..20, 1e-4);
}

#[test]
fn text_only_gradients() {
    check_mode(Mode::TextOnly, 0..20, 1e-4);
}

#[test]
fn missing_note_zeroes_text_path() {
    let cfg = small(Mode::Multimodal);
    let model = Model::<f64>::new(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = random_batch(&cfg, 6, 3, &mut rng);
    let cache = model.forward(&batch, None).unwrap();
    let tr = model.trace(&cache, 2);
    assert!(tr.z_text.unwrap().iter().all(|&v| v == 0.0));
    let g = tr.gate.unwrap();
    for ((zf, zt), g) in tr.z_fused.iter().zip(tr.z_temporal.unwrap()).zip(g) {
        assert!((zf - g * zt).abs() < 1e-15);
    }
    let alpha = tr.alpha.unwrap();
    assert_eq!(alpha.len(), 6);
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((tr.p - 1.0 / (1.0 + (-tr.logit).exp())).abs() < 1e-15);
}

#[test]
fn text_only_ignores_window_and_structured_ignores_note() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = small(Mode::TextOnly);
    let m = Model::<f64>::new(cfg.clone(), 1).unwrap();
    let a = random_batch(&cfg, 4, 3, &mut rng);
    let mut b = a.clone();
    b.window.iter_mut().for_each(|v| *v = -*v * 2.0);
    assert_eq!(m.forward(&a, None).unwrap().logits, m.forward(&b, None).unwrap().logits);

    let cfg = small(Mode::StructuredOnly);
    let m = Model::<f64>::new(cfg.clone(), 1).unwrap();
    let a = random_batch(&cfg, 4, 3, &mut rng);
    let mut b = a.clone();
    b.text.iter_mut().for_each(|v| *v += 3.0);
    assert_eq!(m.forward(&a, None).unwrap().logits, m.forward(&b, None).unwrap().logits);
}

#[test]
fn reload_by_name_matches_and_rejects_mismatch() {
    let cfg = small(Mode::Multimodal);
    let m = Model::<f32>::new(cfg.clone(), 5).unwrap();
    let back = Model::<f32>::from_parameters(cfg.clone(), &m.params).unwrap();
    assert_eq!(back.params.flatten(), m.params.flatten());
    let other = ModelConfig {
        lstm_hidden: 4,
        proj_dim: 8,
        ..cfg
    };
    assert!(matches!(
        Model::<f32>::from_parameters(other, &m.params),
        Err(ModelError::Checkpoint(_))
    ));
}

#[test]
fn bad_window_shape_is_reported() {
    let cfg = small(Mode::StructuredOnly);
    let m = Model::<f64>::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut b = random_batch(&cfg, 4, 2, &mut rng);
    b.window.pop();
    assert!(matches!(m.forward(&b, None), Err(ModelError::Shape(_))));
}

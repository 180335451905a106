//! The multimodal network and its two ablations.
//!
//! ```text
//! window ─ BiLSTM ─ attention ─ z_temporal ─┐
//!                                            gate ─ z_fused ─┬─ [· , statics] ─ 64 ─ ReLU ─ 1 ─ logit
//! note ─── ReLU(W·e + b) ───── z_text ──────┘
//! ```
//!
//! The gate is `g = σ(W_g [z_temporal; z_text] + b_g)` and mixes
//! `z_fused = g ⊙ z_temporal + (1 − g) ⊙ z_text`. When a sample has no note,
//! `z_text` is exactly zero. `structured_only` feeds `z_temporal` straight to
//! the classifier and `text_only` feeds `z_text`; neither allocates the gate.

mod config;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numkernel::ops::{affine_backward, affine_forward, dropout_mask, sigmoid};
use crate::numkernel::{
    AttentionCache, AttentionPool, BiLstm, BiLstmCache, Gradients, NumError, ParamId, ParameterSet, Real, Tensor,
    xavier_uniform,
};
use crate::sampler::{Batch, Dataset, N_STATICS};

pub use config::{Mode, ModelConfig};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("window shape: {0}")]
    Shape(String),
    #[error("parameter `{0}` missing or mis-shaped in checkpoint")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    w: ParamId,
    b: ParamId,
    n_in: usize,
    n_out: usize,
}

impl Affine {
    fn register<F: Real>(
        params: &mut ParameterSet<F>,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumError> {
        let w = Tensor::from_vec(&[n_out, n_in], xavier_uniform(rng, n_in, n_out, n_in * n_out))?;
        Ok(Affine {
            w: params.add(&format!("{name}.w"), w)?,
            b: params.add(&format!("{name}.b"), Tensor::zeros(&[n_out]))?,
            n_in,
            n_out,
        })
    }

    fn forward<F: Real>(&self, p: &ParameterSet<F>, x: &[F], rows: usize) -> Vec<F> {
        let mut y = vec![F::zero(); rows * self.n_out];
        affine_forward(x, rows, self.n_in, p.value(self.w), self.n_out, p.value(self.b), &mut y);
        y
    }

    fn backward<F: Real>(
        &self,
        p: &ParameterSet<F>,
        x: &[F],
        rows: usize,
        dy: &[F],
        g: &mut Gradients<F>,
        dx: Option<&mut [F]>,
    ) {
        let mut dw = std::mem::take(&mut g.bufs[self.w.0]);
        let mut db = std::mem::take(&mut g.bufs[self.b.0]);
        affine_backward(x, rows, self.n_in, p.value(self.w), self.n_out, dy, dx, &mut dw, &mut db);
        g.bufs[self.w.0] = dw;
        g.bufs[self.b.0] = db;
    }
}

/// Saved activations of one batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F: Real> {
    pub batch: usize,
    pub t_len: usize,
    lstm: Option<BiLstmCache<F>>,
    attn: Option<AttentionCache<F>>,
    /// `[B × 2H]`.
    pub z_temporal: Vec<F>,
    text_pre: Vec<F>,
    text_mask: Vec<F>,
    /// `[B × proj]`.
    pub z_text: Vec<F>,
    /// `[B × D]`.
    pub gate: Vec<F>,
    pub z_fused: Vec<F>,
    clf_in: Vec<F>,
    hid_pre: Vec<F>,
    hid_mask: Vec<F>,
    hid: Vec<F>,
    pub logits: Vec<F>,
}

impl<F: Real> ForwardCache<F> {
    pub fn probs(&self) -> Vec<F> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }
}

/// Per-sample view of the intermediate representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z_temporal: Option<Vec<f64>>,
    pub z_text: Option<Vec<f64>>,
    pub gate: Option<Vec<f64>>,
    pub z_fused: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub logit: f64,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct Model<F: Real> {
    pub config: ModelConfig,
    pub params: ParameterSet<F>,
    encoder: Option<(BiLstm, AttentionPool)>,
    text: Option<Affine>,
    gate: Option<Affine>,
    clf1: Affine,
    clf2: Affine,
}

fn row<F: Real>(v: &[F], i: usize, width: usize) -> Vec<f64> {
    v[i * width..(i + 1) * width].iter().map(|x| x.as_f64()).collect()
}

impl<F: Real> Model<F> {
    /// Allocates and initializes the parameters the configured mode uses.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let encoder = if config.mode.uses_temporal() {
            let lstm = BiLstm::register(
                &mut params,
                "lstm",
                config.input_dim,
                config.lstm_hidden,
                config.lstm_layers,
                config.dropout,
                &mut rng,
            )?;
            let attn = AttentionPool::register(
                &mut params,
                "attn.w",
                config.temporal_dim(),
                config.attention_heads,
                &mut rng,
            )?;
            Some((lstm, attn))
        } else {
            None
        };
        let text = if config.mode.uses_text() {
            Some(Affine::register(&mut params, "text", config.text_in, config.proj_dim, &mut rng)?)
        } else {
            None
        };
        let gate = if config.mode == Mode::Multimodal {
            let d = config.temporal_dim();
            Some(Affine::register(&mut params, "gate", 2 * d, d, &mut rng)?)
        } else {
            None
        };
        let clf1 = Affine::register(&mut params, "clf.1", config.fused_dim() + N_STATICS, config.clf_hidden, &mut rng)?;
        let clf2 = Affine::register(&mut params, "clf.2", config.clf_hidden, 1, &mut rng)?;
        Ok(Model {
            config,
            params,
            encoder,
            text,
            gate,
            clf1,
            clf2,
        })
    }

    /// Rebuilds a model from stored parameters, matched by name and shape.
    pub fn from_parameters(config: ModelConfig, stored: &ParameterSet<f32>) -> Result<Self, ModelError> {
        let mut model = Model::new(config, 0)?;
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let src = stored
                .id(&name)
                .map(|s| stored.tensor(s))
                .filter(|t| t.shape() == model.params.tensor(id).shape())
                .ok_or_else(|| ModelError::Checkpoint(name.clone()))?;
            for (d, s) in model.params.value_mut(id).iter_mut().zip(&src.data) {
                *d = F::from_f64(*s as f64);
            }
        }
        if stored.len() != model.params.len() {
            return Err(ModelError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(model)
    }

    pub fn n_parameters(&self) -> usize {
        self.params.n_scalars()
    }

    /// Forward pass. Passing a dropout RNG selects training mode.
    pub fn forward(&self, batch: &Batch<F>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<ForwardCache<F>, ModelError> {
        let cfg = &self.config;
        let b = batch.size;
        if b == 0 || batch.window.len() % (b * cfg.input_dim) != 0 {
            return Err(ModelError::Shape(format!(
                "window of {} values for batch {} × {} channels",
                batch.window.len(),
                b,
                cfg.input_dim
            )));
        }
        let t_len = batch.window.len() / (b * cfg.input_dim);
        if batch.text.len() != b * cfg.text_in || batch.statics.len() != b * N_STATICS {
            return Err(ModelError::Shape("text or static inputs mis-sized".into()));
        }
        let (lstm, attn, z_temporal) = match &self.encoder {
            Some((lstm, pool)) => {
                let lc = lstm.forward(&self.params, &batch.window, t_len, b, dropout_rng.as_deref_mut());
                let ac = pool.forward(&self.params, &lc.out, t_len, b);
                let z = ac.z.clone();
                (Some(lc), Some(ac), z)
            }
            None => (None, None, Vec::new()),
        };
        let (text_pre, text_mask, z_text) = match &self.text {
            Some(aff) => {
                let pre = aff.forward(&self.params, &batch.text, b);
                let mask = match dropout_rng.as_deref_mut() {
                    Some(rng) => dropout_mask(rng, pre.len(), cfg.dropout),
                    None => vec![F::one(); pre.len()],
                };
                let p = cfg.proj_dim;
                let z: Vec<F> = pre
                    .iter()
                    .zip(&mask)
                    .enumerate()
                    .map(|(i, (&x, &m))| x.max(F::zero()) * m * batch.has_note[i / p])
                    .collect();
                (pre, mask, z)
            }
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let (gate, z_fused) = match (&self.gate, cfg.mode) {
            (Some(aff), Mode::Multimodal) => {
                let d = cfg.temporal_dim();
                let mut u = Vec::with_capacity(b * 2 * d);
                for i in 0..b {
                    u.extend_from_slice(&z_temporal[i * d..(i + 1) * d]);
                    u.extend_from_slice(&z_text[i * d..(i + 1) * d]);
                }
                let g: Vec<F> = aff.forward(&self.params, &u, b).into_iter().map(sigmoid).collect();
                let zf = g
                    .iter()
                    .zip(z_temporal.iter().zip(&z_text))
                    .map(|(&g, (&zt, &zx))| g * zt + (F::one() - g) * zx)
                    .collect();
                (g, zf)
            }
            (_, Mode::StructuredOnly) => (Vec::new(), z_temporal.clone()),
            (_, Mode::TextOnly) => (Vec::new(), z_text.clone()),
            (None, Mode::Multimodal) => unreachable!("multimodal model always has a gate"),
        };
        let d = cfg.fused_dim();
        let mut clf_in = Vec::with_capacity(b * (d + N_STATICS));
        for i in 0..b {
            clf_in.extend_from_slice(&z_fused[i * d..(i + 1) * d]);
            clf_in.extend_from_slice(&batch.statics[i * N_STATICS..(i + 1) * N_STATICS]);
        }
        let hid_pre = self.clf1.forward(&self.params, &clf_in, b);
        let hid_mask = match dropout_rng {
            Some(rng) => dropout_mask(rng, hid_pre.len(), cfg.dropout),
            None => vec![F::one(); hid_pre.len()],
        };
        let hid: Vec<F> = hid_pre.iter().zip(&hid_mask).map(|(&x, &m)| x.max(F::zero()) * m).collect();
        let logits = self.clf2.forward(&self.params, &hid, b);
        Ok(ForwardCache {
            batch: b,
            t_len,
            lstm,
            attn,
            z_temporal,
            text_pre,
            text_mask,
            z_text,
            gate,
            z_fused,
            clf_in,
            hid_pre,
            hid_mask,
            hid,
            logits,
        })
    }

    /// Gradients of a loss with respect to every parameter, given `dL/dlogit`.
    pub fn backward(&self, batch: &Batch<F>, cache: &ForwardCache<F>, dlogits: &[F]) -> Gradients<F> {
        let cfg = &self.config;
        let b = cache.batch;
        let p = &self.params;
        let mut g = Gradients::zeros_like(p);

        let mut dhid = vec![F::zero(); b * cfg.clf_hidden];
        self.clf2.backward(p, &cache.hid, b, dlogits, &mut g, Some(&mut dhid));
        let dhid_pre: Vec<F> = dhid
            .iter()
            .zip(cache.hid_pre.iter().zip(&cache.hid_mask))
            .map(|(&d, (&x, &m))| if x > F::zero() { d * m } else { F::zero() })
            .collect();
        let d = cfg.fused_dim();
        let w_in = d + N_STATICS;
        let mut dclf_in = vec![F::zero(); b * w_in];
        self.clf1.backward(p, &cache.clf_in, b, &dhid_pre, &mut g, Some(&mut dclf_in));
        let mut dz_fused = Vec::with_capacity(b * d);
        for i in 0..b {
            dz_fused.extend_from_slice(&dclf_in[i * w_in..i * w_in + d]);
        }

        let (dz_t, dz_x) = match cfg.mode {
            Mode::StructuredOnly => (dz_fused, Vec::new()),
            Mode::TextOnly => (Vec::new(), dz_fused),
            Mode::Multimodal => {
                let gate = self.gate.expect("multimodal gate");
                let one = F::one();
                let mut dz_t = vec![F::zero(); b * d];
                let mut dz_x = vec![F::zero(); b * d];
                let mut da = vec![F::zero(); b * d];
                for k in 0..b * d {
                    let (gk, zt, zx, df) = (cache.gate[k], cache.z_temporal[k], cache.z_text[k], dz_fused[k]);
                    dz_t[k] = df * gk;
                    dz_x[k] = df * (one - gk);
                    da[k] = df * (zt - zx) * gk * (one - gk);
                }
                let mut u = Vec::with_capacity(b * 2 * d);
                for i in 0..b {
                    u.extend_from_slice(&cache.z_temporal[i * d..(i + 1) * d]);
                    u.extend_from_slice(&cache.z_text[i * d..(i + 1) * d]);
                }
                let mut du = vec![F::zero(); b * 2 * d];
                gate.backward(p, &u, b, &da, &mut g, Some(&mut du));
                for i in 0..b {
                    for j in 0..d {
                        dz_t[i * d + j] += du[i * 2 * d + j];
                        dz_x[i * d + j] += du[i * 2 * d + d + j];
                    }
                }
                (dz_t, dz_x)
            }
        };

        if let Some(aff) = &self.text {
            let pdim = cfg.proj_dim;
            let dpre: Vec<F> = dz_x
                .iter()
                .enumerate()
                .map(|(k, &dz)| {
                    if cache.text_pre[k] > F::zero() {
                        dz * cache.text_mask[k] * batch.has_note[k / pdim]
                    } else {
                        F::zero()
                    }
                })
                .collect();
            aff.backward(p, &batch.text, b, &dpre, &mut g, None);
        }

        if let Some((lstm, pool)) = &self.encoder {
            let lc = cache.lstm.as_ref().expect("encoder cache");
            let ac = cache.attn.as_ref().expect("attention cache");
            let mut dh = vec![F::zero(); lc.out.len()];
            pool.backward(p, &lc.out, ac, &dz_t, &mut g, &mut dh);
            lstm.backward(p, lc, &dh, &mut g, None);
        }
        g
    }

    /// Intermediate representations of sample `i` in a cached batch.
    pub fn trace(&self, cache: &ForwardCache<F>, i: usize) -> ForwardTrace {
        let cfg = &self.config;
        let d = cfg.temporal_dim();
        let logit = cache.logits[i].as_f64();
        ForwardTrace {
            z_temporal: cfg.mode.uses_temporal().then(|| row(&cache.z_temporal, i, d)),
            z_text: cfg.mode.uses_text().then(|| row(&cache.z_text, i, cfg.proj_dim)),
            gate: (cfg.mode == Mode::Multimodal).then(|| row(&cache.gate, i, d)),
            z_fused: row(&cache.z_fused, i, cfg.fused_dim()),
            alpha: cache.attn.as_ref().map(|a| {
                let m = a.mean_alpha(cfg.attention_heads);
                row(&m, i, cache.t_len)
            }),
            logit,
            p: sigmoid(logit),
        }
    }

    /// Eval-mode logits for the samples at `idx`, in order.
    pub fn predict_logits(&self, data: &Dataset, idx: &[usize], batch_size: usize) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(idx.len());
        let mut batch = Batch::default();
        for chunk in idx.chunks(batch_size.max(1)) {
            data.fill_batch(chunk, &mut batch);
            let cache = self.forward(&batch, None)?;
            out.extend(cache.logits.iter().map(|z| z.as_f64()));
        }
        Ok(out)
    }

    /// Eval-mode logits for every sample of `data`.
    pub fn predict_all(&self, data: &Dataset, batch_size: usize) -> Result<Vec<f64>, ModelError> {
        let idx: Vec<usize> = (0..data.len()).collect();
        self.predict_logits(data, &idx, batch_size)
    }
}

#[cfg(test)]
mod tests;

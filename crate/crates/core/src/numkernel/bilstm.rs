use rand::Rng;

use super::ops::dropout_mask;
use super::{Gradients, LstmCache, LstmLayer, NumError, ParameterSet, Real};

/// Stacked bidirectional LSTM with inverted dropout between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    /// `(forward, reverse)` direction per layer.
    pub layers: Vec<(LstmLayer, LstmLayer)>,
    pub input: usize,
    pub hidden: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
struct LayerCache<F: Real> {
    input: Vec<F>,
    rev_input: Vec<F>,
    fwd: LstmCache<F>,
    bwd: LstmCache<F>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<F: Real> {
    pub t_len: usize,
    pub batch: usize,
    /// Final-layer outputs `[T × B × 2H]`, forward half first.
    pub out: Vec<F>,
    layers: Vec<LayerCache<F>>,
    /// Dropout mask applied to each non-final layer's output.
    masks: Vec<Option<Vec<F>>>,
}

/// Reverses the time axis of a time-major buffer with `row` values per step.
pub(crate) fn reverse_time<F: Real>(x: &[F], t_len: usize, row: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(x.len());
    for t in (0..t_len).rev() {
        out.extend_from_slice(&x[t * row..(t + 1) * row]);
    }
    out
}

impl BiLstm {
    pub fn register<F: Real>(
        params: &mut ParameterSet<F>,
        prefix: &str,
        input: usize,
        hidden: usize,
        n_layers: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, NumError> {
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let n = if l == 0 { input } else { 2 * hidden };
            let f = LstmLayer::register(params, &format!("{prefix}.l{l}.fwd"), n, hidden, rng)?;
            let b = LstmLayer::register(params, &format!("{prefix}.l{l}.bwd"), n, hidden, rng)?;
            layers.push((f, b));
        }
        Ok(BiLstm {
            layers,
            input,
            hidden,
            dropout,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `x` is `[T × B × input]`. Passing a dropout RNG selects training mode.
    pub fn forward<F: Real, R: Rng>(
        &self,
        params: &ParameterSet<F>,
        x: &[F],
        t_len: usize,
        batch: usize,
        mut dropout_rng: Option<&mut R>,
    ) -> BiLstmCache<F> {
        let hd = self.hidden;
        let mut input = x.to_vec();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::new();
        let mut out = Vec::new();
        for (l, (fl, bl)) in self.layers.iter().enumerate() {
            let n = fl.input;
            let rev_input = reverse_time(&input, t_len, batch * n);
            let fwd = fl.forward(params, &input, t_len, batch, None);
            let bwd = bl.forward(params, &rev_input, t_len, batch, None);
            out = vec![F::zero(); t_len * batch * 2 * hd];
            for t in 0..t_len {
                let tr = t_len - 1 - t;
                for b in 0..batch {
                    let dst = &mut out[(t * batch + b) * 2 * hd..(t * batch + b + 1) * 2 * hd];
                    dst[..hd].copy_from_slice(&fwd.h[(t * batch + b) * hd..(t * batch + b + 1) * hd]);
                    dst[hd..].copy_from_slice(&bwd.h[(tr * batch + b) * hd..(tr * batch + b + 1) * hd]);
                }
            }
            layers.push(LayerCache {
                input: std::mem::take(&mut input),
                rev_input,
                fwd,
                bwd,
            });
            if l + 1 < self.layers.len() {
                let mask = match dropout_rng.as_deref_mut() {
                    Some(rng) if self.dropout > 0.0 => {
                        let m = dropout_mask::<F>(rng, out.len(), self.dropout);
                        for (v, k) in out.iter_mut().zip(&m) {
                            *v *= *k;
                        }
                        Some(m)
                    }
                    _ => None,
                };
                masks.push(mask);
                input = out.clone();
            }
        }
        BiLstmCache {
            t_len,
            batch,
            out,
            layers,
            masks,
        }
    }

    /// Accumulates parameter gradients for `dout [T × B × 2H]`; adds the input gradient into `dx`.
    pub fn backward<F: Real>(
        &self,
        params: &ParameterSet<F>,
        cache: &BiLstmCache<F>,
        dout: &[F],
        grads: &mut Gradients<F>,
        dx: Option<&mut [F]>,
    ) {
        let (t_len, batch, hd) = (cache.t_len, cache.batch, self.hidden);
        let mut d = dout.to_vec();
        let mut dx = dx;
        for l in (0..self.layers.len()).rev() {
            let (fl, bl) = &self.layers[l];
            let lc = &cache.layers[l];
            let n = fl.input;
            let mut d_f = vec![F::zero(); t_len * batch * hd];
            let mut d_b_rev = vec![F::zero(); t_len * batch * hd];
            for t in 0..t_len {
                let tr = t_len - 1 - t;
                for b in 0..batch {
                    let src = &d[(t * batch + b) * 2 * hd..(t * batch + b + 1) * 2 * hd];
                    d_f[(t * batch + b) * hd..(t * batch + b + 1) * hd].copy_from_slice(&src[..hd]);
                    d_b_rev[(tr * batch + b) * hd..(tr * batch + b + 1) * hd].copy_from_slice(&src[hd..]);
                }
            }
            let need_dx = l > 0 || dx.is_some();
            let mut d_in = vec![F::zero(); if need_dx { t_len * batch * n } else { 0 }];
            let mut d_in_rev = vec![F::zero(); d_in.len()];
            fl.backward(params, &lc.fwd, &lc.input, &d_f, grads, need_dx.then_some(&mut d_in[..]));
            bl.backward(params, &lc.bwd, &lc.rev_input, &d_b_rev, grads, need_dx.then_some(&mut d_in_rev[..]));
            if !need_dx {
                break;
            }
            let back = reverse_time(&d_in_rev, t_len, batch * n);
            for (a, b) in d_in.iter_mut().zip(&back) {
                *a += *b;
            }
            if l > 0 {
                if let Some(mask) = &cache.masks[l - 1] {
                    for (v, k) in d_in.iter_mut().zip(mask) {
                        *v *= *k;
                    }
                }
                d = d_in;
            } else if let Some(dx) = dx.as_deref_mut() {
                for (a, b) in dx.iter_mut().zip(&d_in) {
                    *a += *b;
                }
            }
        }
    }
}

use rand::Rng;

use super::ops::softmax_in_place;
use super::params::uniform;
use super::{Gradients, NumError, ParamId, ParameterSet, Real, Tensor};

/// Softmax attention pooling over time: `α = softmax_t(w·h_t)`, `z = Σ_t α_t h_t`.
///
/// With several heads each has its own `w`; pooled vectors are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionPool {
    pub w: ParamId,
    pub heads: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F: Real> {
    pub t_len: usize,
    pub batch: usize,
    /// Weights `[heads × B × T]`.
    pub alpha: Vec<F>,
    /// Pooled vectors `[B × D]`.
    pub z: Vec<F>,
}

impl<F: Real> AttentionCache<F> {
    /// Head-averaged weights `[B × T]`.
    pub fn mean_alpha(&self, heads: usize) -> Vec<F> {
        let n = self.batch * self.t_len;
        let scale = F::from_f64(1.0 / heads as f64);
        (0..n)
            .map(|i| (0..heads).map(|k| self.alpha[k * n + i]).sum::<F>() * scale)
            .collect()
    }
}

impl AttentionPool {
    pub fn register<F: Real>(
        params: &mut ParameterSet<F>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, NumError> {
        let a = 1.0 / (dim as f64).sqrt();
        let w = Tensor::from_vec(&[heads, dim], uniform(rng, a, heads * dim))?;
        Ok(AttentionPool {
            w: params.add(name, w)?,
            heads,
            dim,
        })
    }

    /// `h` is `[T × B × D]`.
    pub fn forward<F: Real>(&self, params: &ParameterSet<F>, h: &[F], t_len: usize, batch: usize) -> AttentionCache<F> {
        let d = self.dim;
        assert_eq!(h.len(), t_len * batch * d, "attention input length");
        let w = params.value(self.w);
        let mut alpha = vec![F::zero(); self.heads * batch * t_len];
        let mut z = vec![F::zero(); batch * d];
        let scale = F::from_f64(1.0 / self.heads as f64);
        for k in 0..self.heads {
            let wk = &w[k * d..(k + 1) * d];
            for b in 0..batch {
                let a = &mut alpha[(k * batch + b) * t_len..(k * batch + b + 1) * t_len];
                for (t, s) in a.iter_mut().enumerate() {
                    let ht = &h[(t * batch + b) * d..(t * batch + b + 1) * d];
                    *s = ht.iter().zip(wk).map(|(x, y)| *x * *y).sum();
                }
                softmax_in_place(a);
                let zb = &mut z[b * d..(b + 1) * d];
                for (t, &at) in a.iter().enumerate() {
                    let ht = &h[(t * batch + b) * d..(t * batch + b + 1) * d];
                    let c = at * scale;
                    for (zv, hv) in zb.iter_mut().zip(ht) {
                        *zv += c * *hv;
                    }
                }
            }
        }
        AttentionCache { t_len, batch, alpha, z }
    }

    /// Accumulates `dw` into `grads` and `dh` (`[T × B × D]`) from `dz [B × D]`.
    pub fn backward<F: Real>(
        &self,
        params: &ParameterSet<F>,
        h: &[F],
        cache: &AttentionCache<F>,
        dz: &[F],
        grads: &mut Gradients<F>,
        dh: &mut [F],
    ) {
        let (t_len, batch, d) = (cache.t_len, cache.batch, self.dim);
        let w = params.value(self.w);
        let scale = F::from_f64(1.0 / self.heads as f64);
        let mut dw = vec![F::zero(); self.heads * d];
        let mut ds = vec![F::zero(); t_len];
        for k in 0..self.heads {
            let wk = &w[k * d..(k + 1) * d];
            for b in 0..batch {
                let a = &cache.alpha[(k * batch + b) * t_len..(k * batch + b + 1) * t_len];
                let dzb = &dz[b * d..(b + 1) * d];
                let mut mean = F::zero();
                for t in 0..t_len {
                    let ht = &h[(t * batch + b) * d..(t * batch + b + 1) * d];
                    let da: F = ht.iter().zip(dzb).map(|(x, y)| *x * *y).sum::<F>() * scale;
                    ds[t] = da;
                    mean += a[t] * da;
                }
                for t in 0..t_len {
                    ds[t] = a[t] * (ds[t] - mean);
                    let ht = &h[(t * batch + b) * d..(t * batch + b + 1) * d];
                    let dht = &mut dh[(t * batch + b) * d..(t * batch + b + 1) * d];
                    let c = a[t] * scale;
                    for j in 0..d {
                        dw[k * d + j] += ds[t] * ht[j];
                        dht[j] += c * dzb[j] + ds[t] * wk[j];
                    }
                }
            }
        }
        for (g, v) in grads.get_mut(self.w).iter_mut().zip(dw) {
            *g += v;
        }
    }
}

use rand::Rng;

use super::ops::{affine_backward, affine_forward, sigmoid};
use super::params::xavier_uniform;
use super::{gemm, Gradients, NumError, ParamId, ParameterSet, Real, Tensor};

/// One LSTM direction. Gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Saved activations of a sequence forward pass, all time-major.
#[derive(Debug, Clone)]
pub struct LstmCache<F: Real> {
    pub t_len: usize,
    pub batch: usize,
    /// Activated gates `[T × B × 4H]`.
    gates: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    /// Hidden outputs `[T × B × H]`.
    pub h: Vec<F>,
    h0: Vec<F>,
    c0: Vec<F>,
}

impl<F: Real> LstmCache<F> {
    /// Cell state `[T × B × H]`.
    pub fn cell(&self) -> &[F] {
        &self.c
    }
}

impl LstmLayer {
    /// Registers `{prefix}.w_ih [4H×n]`, `{prefix}.w_hh [4H×H]` and `{prefix}.b [4H]`.
    ///
    /// Kernels are Xavier-uniform; the bias is zero except the forget block, which is 1.
    pub fn register<F: Real>(
        params: &mut ParameterSet<F>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, NumError> {
        let g = 4 * hidden;
        let w_ih = Tensor::from_vec(&[g, input], xavier_uniform(rng, input, g, g * input))?;
        let w_hh = Tensor::from_vec(&[g, hidden], xavier_uniform(rng, hidden, g, g * hidden))?;
        let mut b = vec![F::zero(); g];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = F::one());
        Ok(LstmLayer {
            w_ih: params.add(&format!("{prefix}.w_ih"), w_ih)?,
            w_hh: params.add(&format!("{prefix}.w_hh"), w_hh)?,
            b: params.add(&format!("{prefix}.b"), Tensor::from_vec(&[g], b)?)?,
            input,
            hidden,
        })
    }

    /// Runs the sequence `x [T × B × n]` from an optional initial `(h0, c0)`.
    pub fn forward<F: Real>(
        &self,
        params: &ParameterSet<F>,
        x: &[F],
        t_len: usize,
        batch: usize,
        init: Option<(&[F], &[F])>,
    ) -> LstmCache<F> {
        let (n, hd) = (self.input, self.hidden);
        let g4 = 4 * hd;
        assert_eq!(x.len(), t_len * batch * n, "lstm input length");
        let (h0, c0) = match init {
            Some((h, c)) => {
                assert_eq!(h.len(), batch * hd);
                assert_eq!(c.len(), batch * hd);
                (h.to_vec(), c.to_vec())
            }
            None => (vec![F::zero(); batch * hd], vec![F::zero(); batch * hd]),
        };
        let w_hh = params.value(self.w_hh);
        let mut gates = vec![F::zero(); t_len * batch * g4];
        affine_forward(x, t_len * batch, n, params.value(self.w_ih), g4, params.value(self.b), &mut gates);
        let mut c = vec![F::zero(); t_len * batch * hd];
        let mut tanh_c = vec![F::zero(); t_len * batch * hd];
        let mut h = vec![F::zero(); t_len * batch * hd];
        let step = batch * hd;
        for t in 0..t_len {
            let (h_prev, c_prev): (&[F], &[F]) = if t == 0 {
                (&h0, &c0)
            } else {
                (&h[(t - 1) * step..t * step], &c[(t - 1) * step..t * step])
            };
            let h_prev = h_prev.to_vec();
            let c_prev = c_prev.to_vec();
            let gt = &mut gates[t * batch * g4..(t + 1) * batch * g4];
            gemm(false, true, batch, g4, hd, F::one(), &h_prev, w_hh, F::one(), gt);
            for b in 0..batch {
                let row = &mut gt[b * g4..(b + 1) * g4];
                for j in 0..hd {
                    let i_g = sigmoid(row[j]);
                    let f_g = sigmoid(row[hd + j]);
                    let g_g = row[2 * hd + j].fast_tanh();
                    let o_g = sigmoid(row[3 * hd + j]);
                    row[j] = i_g;
                    row[hd + j] = f_g;
                    row[2 * hd + j] = g_g;
                    row[3 * hd + j] = o_g;
                    let k = t * step + b * hd + j;
                    let cv = f_g * c_prev[b * hd + j] + i_g * g_g;
                    let tc = cv.fast_tanh();
                    c[k] = cv;
                    tanh_c[k] = tc;
                    h[k] = o_g * tc;
                }
            }
        }
        LstmCache {
            t_len,
            batch,
            gates,
            c,
            tanh_c,
            h,
            h0,
            c0,
        }
    }

    /// Backpropagation through time.
    ///
    /// `dh [T × B × H]` is the loss gradient with respect to every hidden
    /// output. Parameter gradients accumulate into `grads`, the input gradient
    /// accumulates into `dx` when given, and `(dh0, dc0)` is returned.
    pub fn backward<F: Real>(
        &self,
        params: &ParameterSet<F>,
        cache: &LstmCache<F>,
        x: &[F],
        dh: &[F],
        grads: &mut Gradients<F>,
        dx: Option<&mut [F]>,
    ) -> (Vec<F>, Vec<F>) {
        let (n, hd) = (self.input, self.hidden);
        let (t_len, batch) = (cache.t_len, cache.batch);
        let g4 = 4 * hd;
        let step = batch * hd;
        let w_hh = params.value(self.w_hh);
        let mut d_pre = vec![F::zero(); t_len * batch * g4];
        let mut dh_next = vec![F::zero(); step];
        let mut dc_next = vec![F::zero(); step];
        let one = F::one();
        for t in (0..t_len).rev() {
            let c_prev: &[F] = if t == 0 { &cache.c0 } else { &cache.c[(t - 1) * step..t * step] };
            let gt = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
            let da = &mut d_pre[t * batch * g4..(t + 1) * batch * g4];
            for b in 0..batch {
                for j in 0..hd {
                    let k = b * hd + j;
                    let kt = t * step + k;
                    let row = &gt[b * g4..(b + 1) * g4];
                    let (i_g, f_g, g_g, o_g) = (row[j], row[hd + j], row[2 * hd + j], row[3 * hd + j]);
                    let tc = cache.tanh_c[kt];
                    let dhv = dh[kt] + dh_next[k];
                    let dc = dhv * o_g * (one - tc * tc) + dc_next[k];
                    let d_o = dhv * tc;
                    let drow = &mut da[b * g4..(b + 1) * g4];
                    drow[j] = dc * g_g * i_g * (one - i_g);
                    drow[hd + j] = dc * c_prev[k] * f_g * (one - f_g);
                    drow[2 * hd + j] = dc * i_g * (one - g_g * g_g);
                    drow[3 * hd + j] = d_o * o_g * (one - o_g);
                    dc_next[k] = dc * f_g;
                }
            }
            gemm(false, false, batch, hd, g4, one, da, w_hh, F::zero(), &mut dh_next);
        }

        let rows = t_len * batch;
        let mut h_prev = Vec::with_capacity(rows * hd);
        h_prev.extend_from_slice(&cache.h0);
        h_prev.extend_from_slice(&cache.h[..rows.saturating_sub(batch) * hd]);
        gemm(true, false, g4, hd, rows, one, &d_pre, &h_prev, one, grads.get_mut(self.w_hh));

        let mut dw_ih = std::mem::take(&mut grads.bufs[self.w_ih.0]);
        let mut db = std::mem::take(&mut grads.bufs[self.b.0]);
        affine_backward(x, rows, n, params.value(self.w_ih), g4, &d_pre, dx, &mut dw_ih, &mut db);
        grads.bufs[self.w_ih.0] = dw_ih;
        grads.bufs[self.b.0] = db;
        (dh_next, dc_next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::gradcheck::max_rel_error;
    use rand::SeedableRng;

    fn setup(seed: u64, n: usize, hd: usize) -> (ParameterSet<f64>, LstmLayer, rand_chacha::ChaCha8Rng) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        let layer = LstmLayer::register(&mut p, "l", n, hd, &mut rng).unwrap();
        // perturb biases so every gate path is exercised
        for v in p.value_mut(layer.b) {
            *v += rng.gen_range(-0.5..0.5);
        }
        (p, layer, rng)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut p = ParameterSet::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let l = LstmLayer::register(&mut p, "l", 3, 4, &mut rng).unwrap();
        for id in [l.w_ih, l.w_hh, l.b] {
            p.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let cache = l.forward(&p, &[0.3, -1.0, 2.0], 1, 1, None);
        assert!(cache.h.iter().all(|&v| v == 0.0));
    }

    /// Loss = Σ r ⊙ h over all steps, plus Σ s ⊙ c at the last step.
    fn loss_of(
        p: &ParameterSet<f64>,
        l: &LstmLayer,
        x: &[f64],
        t: usize,
        b: usize,
        init: Option<(&[f64], &[f64])>,
        r: &[f64],
    ) -> f64 {
        let cache = l.forward(p, x, t, b, init);
        cache.h.iter().zip(r).map(|(a, b)| a * b).sum()
    }

    fn check(seed: u64, t: usize, tol: f64, with_state: bool) {
        let (n, hd, b) = (3, 4, 2);
        let (mut p, l, mut rng) = setup(seed, n, hd);
        let x: Vec<f64> = (0..t * b * n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let r: Vec<f64> = (0..t * b * hd).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..b * hd).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let c0: Vec<f64> = (0..b * hd).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let init = with_state.then_some((h0.as_slice(), c0.as_slice()));
        let cache = l.forward(&p, &x, t, b, init);
        let mut grads = Gradients::zeros_like(&p);
        let mut dx = vec![0.0; x.len()];
        let (dh0, dc0) = l.backward(&p, &cache, &x, &r, &mut grads, Some(&mut dx));

        let e = max_rel_error(&dx, &x, |v| loss_of(&p, &l, v, t, b, init, &r));
        assert!(e < tol, "dx seed {seed}: {e}");
        for id in [l.w_ih, l.w_hh, l.b] {
            let base = p.value(id).to_vec();
            let analytic = grads.get(id).to_vec();
            let e = max_rel_error(&analytic, &base, |v| {
                let mut q = p.clone();
                q.value_mut(id).copy_from_slice(v);
                loss_of(&q, &l, &x, t, b, init, &r)
            });
            assert!(e < tol, "{} seed {seed}: {e}", p.name(id));
        }
        if with_state {
            let e = max_rel_error(&dh0, &h0, |v| loss_of(&p, &l, &x, t, b, Some((v, &c0)), &r));
            assert!(e < tol, "dh0 seed {seed}: {e}");
            let e = max_rel_error(&dc0, &c0, |v| loss_of(&p, &l, &x, t, b, Some((&h0, v)), &r));
            assert!(e < tol, "dc0 seed {seed}: {e}");
        }
        p.clear_grads();
    }

    #[test]
    fn single_step_cell_gradients() {
        for seed in 0..20 {
            check(seed, 1, 1e-4, true);
        }
    }

    #[test]
    fn five_step_bptt_gradients() {
        for seed in 0..20 {
            check(100 + seed, 5, 1e-3, false);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut p = ParameterSet::<f32>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let l = LstmLayer::register(&mut p, "l", 2, 3, &mut rng).unwrap();
        assert_eq!(p.value(l.b), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let bound = (6.0f32 / (2.0 + 12.0)).sqrt();
        assert!(p.value(l.w_ih).iter().all(|v| v.abs() <= bound));
    }
}

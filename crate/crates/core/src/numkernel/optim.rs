use super::{NumError, ParameterSet, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// One AdamW update using the installed gradients.
///
/// Weight decay is decoupled: `p ← p − lr·wd·p` before the moment step
/// `p ← p − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step<F: Real>(params: &mut ParameterSet<F>, lr: f64, cfg: &AdamWConfig) -> Result<(), NumError> {
    if let Some(i) = params.tensors.iter().position(|t| t.grad.is_none()) {
        return Err(NumError::MissingGrad(params.names()[i].clone()));
    }
    params.step += 1;
    let t = params.step as i32;
    let bc1 = F::from_f64(1.0 - cfg.beta1.powi(t));
    let bc2 = F::from_f64(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (F::from_f64(cfg.beta1), F::from_f64(cfg.beta2));
    let one = F::one();
    let eps = F::from_f64(cfg.eps);
    let decay = F::from_f64(lr * cfg.weight_decay);
    let lr = F::from_f64(lr);
    let ParameterSet { tensors, m, v, .. } = params;
    for ((tensor, m), v) in tensors.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
        let grad = tensor.grad.as_ref().expect("checked above");
        for (((p, &g), m), v) in tensor.data.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *p -= decay * *p;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all installed gradients so their joint L2 norm is at most `max_norm`.
///
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Real>(params: &mut ParameterSet<F>, max_norm: f64) -> Result<f64, NumError> {
    let mut sq = 0.0f64;
    for (i, t) in params.tensors.iter().enumerate() {
        let g = t
            .grad
            .as_ref()
            .ok_or_else(|| NumError::MissingGrad(params.names()[i].clone()))?;
        sq += g.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = F::from_f64(max_norm / norm);
        for t in params.tensors.iter_mut() {
            for g in t.grad.as_mut().expect("checked above") {
                *g *= s;
            }
        }
    }
    Ok(norm)
}

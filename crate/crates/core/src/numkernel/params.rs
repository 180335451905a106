use std::collections::HashMap;

use rand::Rng;

use super::{NumError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named learnable tensors plus AdamW moment buffers and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F: Real> {
    names: Vec<String>,
    pub(crate) tensors: Vec<Tensor<F>>,
    index: HashMap<String, usize>,
    pub(crate) m: Vec<Vec<F>>,
    pub(crate) v: Vec<Vec<F>>,
    pub(crate) step: u64,
}

impl<F: Real> Default for ParameterSet<F> {
    fn default() -> Self {
        ParameterSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }
}

impl<F: Real> ParameterSet<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<F>) -> Result<ParamId, NumError> {
        if self.index.contains_key(name) {
            return Err(NumError::DuplicateName(name.to_string()));
        }
        let id = self.tensors.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.m.push(vec![F::zero(); tensor.len()]);
        self.v.push(vec![F::zero(); tensor.len()]);
        self.tensors.push(tensor);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[F] {
        &self.tensors[id.0].data
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.tensors[id.0].data
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> (&[F], &[F]) {
        (&self.m[id.0], &self.v[id.0])
    }

    pub fn set_moments(&mut self, id: ParamId, m: Vec<F>, v: Vec<F>) -> Result<(), NumError> {
        let n = self.tensors[id.0].len();
        if m.len() != n || v.len() != n {
            return Err(NumError::Shape(format!("moments for `{}`", self.names[id.0])));
        }
        self.m[id.0] = m;
        self.v[id.0] = v;
        Ok(())
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Moves a gradient buffer into the tensors' grad slots.
    pub fn install_grads(&mut self, grads: Gradients<F>) -> Result<(), NumError> {
        if grads.bufs.len() != self.tensors.len() {
            return Err(NumError::Shape(format!(
                "{} gradient buffers for {} parameters",
                grads.bufs.len(),
                self.tensors.len()
            )));
        }
        for (t, g) in self.tensors.iter_mut().zip(grads.bufs) {
            t.set_grad(g)?;
        }
        Ok(())
    }

    /// Copies of all values, flattened in parameter order.
    pub fn flatten(&self) -> Vec<F> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[F]) -> Result<(), NumError> {
        if flat.len() != self.n_scalars() {
            return Err(NumError::Shape(format!(
                "flat vector of {} for {} parameters",
                flat.len(),
                self.n_scalars()
            )));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> ParameterSet<G> {
        let conv = |v: &Vec<F>| v.iter().map(|x| G::from_f64(x.as_f64())).collect();
        ParameterSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
            m: self.m.iter().map(conv).collect(),
            v: self.v.iter().map(conv).collect(),
            step: self.step,
        }
    }
}

/// Gradient accumulators aligned with a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F: Real> {
    pub bufs: Vec<Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &ParameterSet<F>) -> Self {
        Gradients {
            bufs: params.tensors.iter().map(|t| vec![F::zero(); t.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[F] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.bufs[id.0]
    }

    pub fn flatten(&self) -> Vec<F> {
        self.bufs.iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform values in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<F: Real>(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<F> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, a, n)
}

pub fn uniform<F: Real>(rng: &mut impl Rng, a: f64, n: usize) -> Vec<F> {
    (0..n).map(|_| F::from_f64(rng.gen_range(-a..=a))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_moments_zeroed() {
        let mut p = ParameterSet::<f64>::new();
        let a = p.add("a", Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(p.add("a", Tensor::zeros(&[1])), Err(NumError::DuplicateName(_))));
        assert_eq!(p.moments(a).0, &[0.0; 4]);
        assert_eq!(p.id("a"), Some(a));
        assert_eq!(p.n_scalars(), 4);
    }
}

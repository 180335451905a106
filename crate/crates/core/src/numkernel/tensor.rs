use super::{NumError, Real};

/// Dense row-major array with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Real> {
    shape: Vec<usize>,
    pub data: Vec<F>,
    pub grad: Option<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self, NumError> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(NumError::Shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                want
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = F::zero()),
            None => self.grad = Some(vec![F::zero(); self.data.len()]),
        }
    }

    pub fn set_grad(&mut self, grad: Vec<F>) -> Result<(), NumError> {
        if grad.len() != self.data.len() {
            return Err(NumError::Shape(format!(
                "gradient length {} does not match shape {:?}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::from_f64(x.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|x| G::from_f64(x.as_f64())).collect()),
        }
    }
}

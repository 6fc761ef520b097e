use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl ParamTensor {
    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.value.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {}", self.name)));
        }
        if self.grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", self.name)));
        }
        Ok(())
    }
}

/// Named, insertion-ordered collection of model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = vec![0.0; value.len()];
        self.params.push(ParamTensor { name, value, grad, trainable: true });
        ParamId(self.params.len() - 1)
    }

    /// Truncated normal (two standard deviations) with `std = 1 / sqrt(fan_in)`.
    pub fn add_fan_in(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ParamId {
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let v: f64 = rng.sample(StandardNormal);
                if v.abs() <= 2.0 {
                    break v * std;
                }
            })
            .collect();
        self.add(name, Tensor { shape: shape.to_vec(), data })
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        self.add(name, Tensor::filled(shape, v))
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParamTensor::zero_grad);
    }

    /// Copies values from `other`, matching by name and shape.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::ModelMismatch(format!(
                "expected {} parameters, checkpoint has {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let src = other
                .find(&p.name)
                .map(|id| other.get(id))
                .ok_or_else(|| Error::ModelMismatch(format!("checkpoint lacks {}", p.name)))?;
            if src.value.shape != p.value.shape {
                return Err(Error::ModelMismatch(format!(
                    "{}: shape {:?} vs {:?}",
                    p.name, src.value.shape, p.value.shape
                )));
            }
            p.value.data.clone_from(&src.value.data);
        }
        Ok(())
    }
}

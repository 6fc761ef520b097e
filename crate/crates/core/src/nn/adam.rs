use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::ModelMismatch(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for p in store.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.trainable {
                for (((w, g), mi), vi) in p.value.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                    *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn zero_gradient_is_null_update() {
        let mut s = scalar_store(0.7);
        let mut adam = AdamState::new(&s, 1e-3);
        adam.step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data[0], 0.7);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut s = scalar_store(1.0);
            let mut adam = AdamState::new(&s, 1e-3);
            s.iter_mut().next().unwrap().grad[0] = g;
            adam.step(&mut s).unwrap();
            let w = s.iter().next().unwrap().value.data[0];
            // m_hat / sqrt(v_hat) = sign(g) up to eps.
            let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
            assert!(s.iter().next().unwrap().grad[0] == 0.0);
        }
    }

    #[test]
    fn descends_quadratic_bowl() {
        let mut s = scalar_store(1.0);
        let mut adam = AdamState::new(&s, 1e-2);
        for _ in 0..200 {
            let p = s.iter_mut().next().unwrap();
            p.grad[0] = 2.0 * p.value.data[0];
            adam.step(&mut s).unwrap();
        }
        assert!(s.iter().next().unwrap().value.data[0].abs() < 0.1);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store(1.0);
        let mut adam = AdamState::new(&s, 1e-3);
        s.iter_mut().next().unwrap().grad[0] = f64::NAN;
        let err = adam.step(&mut s).unwrap_err();
        assert!(err.to_string().contains('w'));
    }
}

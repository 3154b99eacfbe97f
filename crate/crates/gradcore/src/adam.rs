use crate::error::{GradError, Result};
use crate::params::ParamStore;

/// Adam hyperparameters. The defaults keep the moment decay rates in the
/// order the reference configuration lists them (`beta1 = 0.99`,
/// `beta2 = 0.9`), which is the reverse of the usual convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.99, beta2: 0.9, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Self { config, first: zeros.clone(), second: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.second[index]
    }

    /// One bias-corrected Adam update of every trainable parameter.
    ///
    /// All gradients are checked before anything is written, so a rejected
    /// step leaves parameters, moments and the step counter untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(GradError::shape("adam_step", format!("state tracks {} tensors, store has {}", self.first.len(), store.len())));
        }
        for (_, p) in store.iter() {
            if p.trainable && !p.grad.is_finite() {
                return Err(GradError::NonFiniteGradient { name: p.name.clone() });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for j in 0..value.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(value)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(grad);
        s
    }

    #[test]
    fn defaults_match_reference_table() {
        let c = AdamConfig::default();
        assert_eq!(c.lr, 5e-4);
        assert_eq!(c.beta1, 0.99);
        assert_eq!(c.beta2, 0.9);
        assert_eq!(c.eps, 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut s = scalar_store(1.25, 0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        assert_eq!(s.value(s.id("theta").unwrap()).item(), 1.25);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        // After one step m̂ = g and v̂ = g², so Δθ = -lr·g/(|g| + eps).
        for &g in &[0.3, -2.0, 1e-3] {
            let mut s = scalar_store(0.5, g);
            let cfg = AdamConfig::default();
            let mut adam = AdamState::new(cfg, &s);
            adam.step(&mut s).unwrap();
            let m_hat = (1.0 - cfg.beta1) * g / (1.0 - cfg.beta1);
            let v_hat = (1.0 - cfg.beta2) * g * g / (1.0 - cfg.beta2);
            let expect = 0.5 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            let got = s.value(s.id("theta").unwrap()).item();
            assert!((got - expect).abs() < 1e-12, "g={g}: {got} vs {expect}");
            let delta = (got - 0.5).abs();
            assert!((delta - cfg.lr * g.abs() / (g.abs() + cfg.eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut s = scalar_store(0.5, f64::NAN);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        let err = adam.step(&mut s).unwrap_err();
        assert!(matches!(err, GradError::NonFiniteGradient { .. }));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(s.value(s.id("theta").unwrap()).item(), 0.5);
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut s = ParamStore::new();
        let id = s.add_buffer("running_mean", Tensor::scalar(3.0)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        assert_eq!(s.value(id).item(), 3.0);
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut s = scalar_store(0.0, 1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        for t in 1..=5 {
            adam.step(&mut s).unwrap();
            assert_eq!(adam.step_count(), t);
        }
    }
}

use crate::error::{invalid, NumericsError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every step.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9999,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction and an exponentially decaying step size.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return invalid("learning rate must be strictly positive");
        }
        if !(config.decay > 0.0 && config.decay <= 1.0) {
            return invalid("learning-rate decay must lie in (0, 1]");
        }
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Learning rate the next step will use.
    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate * self.config.decay.powi(self.steps as i32)
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update. `grads[i]` belongs to the i-th parameter in store
    /// order; `None` is treated as a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            ));
        }
        for (id, g) in params.ids().zip(grads) {
            if let Some(g) = g {
                if g.shape() != params.get(id).shape() {
                    return invalid(format!("gradient shape mismatch for {}", params.name(id)));
                }
                if !g.is_finite() {
                    return Err(NumericsError::Divergence(format!(
                        "non-finite gradient for {} at step {}",
                        params.name(id),
                        self.steps + 1
                    )));
                }
            }
        }
        let lr = self.learning_rate();
        self.steps += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.get_mut(id).data_mut();
            match &grads[i] {
                Some(g) => {
                    for j in 0..p.len() {
                        let gj = g.data()[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + epsilon);
                    }
                }
                None => {
                    for j in 0..p.len() {
                        m[j] *= beta1;
                        v[j] *= beta2;
                        p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::from_vec(values.to_vec())).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = store(&[1.0, -2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s).unwrap();
        adam.step(&mut s, &[Some(Tensor::zeros(&[2]))]).unwrap();
        assert_eq!(s.get(s.id("p").unwrap()).data(), &[1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store(&[0.5]);
        let mut adam = AdamState::new(AdamConfig::default(), &s).unwrap();
        adam.step(&mut s, &[Some(Tensor::from_vec(vec![1.0]))]).unwrap();
        let moved = 0.5 - s.get(s.id("p").unwrap()).data()[0];
        // m_hat = 1, v_hat = 1 -> lr / (1 + eps)
        assert!((moved - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_decays_each_step() {
        let mut s = store(&[0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s).unwrap();
        let mut last = adam.learning_rate();
        for _ in 0..5 {
            adam.step(&mut s, &[Some(Tensor::from_vec(vec![0.3]))]).unwrap();
            let lr = adam.learning_rate();
            assert!(lr > 0.0 && lr < last);
            last = lr;
        }
        assert!((last - 1e-3 * 0.9999f64.powi(5)).abs() < 1e-18);
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut s = store(&[0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s).unwrap();
        let bad = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        assert!(matches!(
            adam.step(&mut s, &[Some(bad)]),
            Err(NumericsError::Divergence(_))
        ));
    }

    #[test]
    fn moments_match_param_shapes() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::zeros(&[2, 3])).unwrap();
        s.insert("b", Tensor::zeros(&[4])).unwrap();
        let adam = AdamState::new(AdamConfig::default(), &s).unwrap();
        for ((_, p), (m, v)) in s.iter().zip(adam.first_moments().iter().zip(adam.second_moments())) {
            assert_eq!(p.shape(), m.shape());
            assert_eq!(p.shape(), v.shape());
        }
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let s = store(&[0.0]);
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &s).is_err());
    }
}

//! Adam optimizer with L2 weight decay.

use crate::error::{numeric_error, Result};
use crate::scalar::Scalar;

use super::{Matrix, ParameterStore};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// When false (the default), weight decay is added to the gradient
    /// before the moment updates (classic L2 regularization). When true, it
    /// is applied as a separate shrinkage step after the Adam update.
    pub decoupled_weight_decay: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decoupled_weight_decay: false,
        }
    }
}

/// First/second moment estimates, aligned index-for-index with a
/// [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    config: AdamConfig,
    m: Vec<Matrix<S>>,
    v: Vec<Matrix<S>>,
    t: u32,
}

impl<S: Scalar> AdamState<S> {
    /// Zero-initialized moments matching `store`'s current layout.
    pub fn new(store: &ParameterStore<S>, config: AdamConfig) -> Self {
        let m = store
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { config, m, v, t: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    /// One Adam update over every trainable parameter, consuming the
    /// gradients currently in `store`. Frozen parameters and their moments
    /// are left untouched. Errors (before modifying anything) if any
    /// trainable gradient contains a non-finite value.
    pub fn step(&mut self, store: &mut ParameterStore<S>) -> Result<()> {
        for p in store.iter() {
            if p.trainable && p.grad.first_nonfinite().is_some() {
                return Err(numeric_error(format!("gradient of `{}`", p.name)));
            }
        }
        self.t += 1;
        let lr = S::of(self.config.learning_rate);
        let wd = S::of(self.config.weight_decay);
        let b1 = S::of(self.config.beta1);
        let b2 = S::of(self.config.beta2);
        let eps = S::of(self.config.epsilon);
        let one = S::one();
        let bc1 = one - b1.powi(self.t as i32);
        let bc2 = one - b2.powi(self.t as i32);
        for (i, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let theta = p.value.data_mut();
            let grad = p.grad.data();
            for j in 0..theta.len() {
                let mut g = grad[j];
                if !self.config.decoupled_weight_decay {
                    g += wd * theta[j];
                }
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                if self.config.decoupled_weight_decay {
                    theta[j] -= lr * wd * theta[j];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.add("w", Matrix::from_rows(&[vec![value]]).unwrap()).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With zero-initialized moments, bias correction makes the first
        // update exactly lr * sign(g) (up to epsilon).
        let mut store = single_param(0.0);
        store.grad_mut("w").set(0, 0, 10.0);
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, cfg);
        adam.step(&mut store).unwrap();
        let w = store.value("w").get(0, 0);
        assert!((w + 1e-3).abs() < 1e-9, "w = {w}");
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimize (w - 3)^2; gradient = 2 (w - 3).
        let mut store = single_param(0.0);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, cfg);
        for _ in 0..500 {
            let w = store.value("w").get(0, 0);
            store.grad_mut("w").set(0, 0, 2.0 * (w - 3.0));
            adam.step(&mut store).unwrap();
        }
        let w = store.value("w").get(0, 0);
        assert!((w - 3.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn coupled_decay_shrinks_weights_through_moments() {
        // Zero gradient, positive weight: coupled L2 still produces a pull
        // toward the origin via g = wd * w.
        let mut store = single_param(1.0);
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, cfg);
        store.zero_grads();
        adam.step(&mut store).unwrap();
        let w = store.value("w").get(0, 0);
        assert!(w < 1.0 && w > 0.9, "w = {w}");
    }

    #[test]
    fn decoupled_decay_is_plain_shrinkage() {
        let mut store = single_param(1.0);
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            weight_decay: 0.1,
            decoupled_weight_decay: true,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, cfg);
        store.zero_grads();
        adam.step(&mut store).unwrap();
        // Zero gradient: the Adam term vanishes; only shrinkage applies.
        let w = store.value("w").get(0, 0);
        assert!((w - (1.0 - 1e-2 * 0.1)).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn frozen_parameters_and_moments_stay_put() {
        let mut store = single_param(2.0);
        store.add("frozen", Matrix::from_rows(&[vec![5.0]]).unwrap()).unwrap();
        store.set_trainable_where(|n| n == "w");
        store.grad_mut("w").set(0, 0, 1.0);
        store.grad_mut("frozen").set(0, 0, 100.0);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store).unwrap();
        assert_eq!(store.value("frozen").get(0, 0), 5.0);
        assert_eq!(adam.v[1].get(0, 0), 0.0);
    }

    #[test]
    fn nan_gradient_is_rejected_before_any_update() {
        let mut store = single_param(2.0);
        store.grad_mut("w").set(0, 0, f64::NAN);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let err = adam.step(&mut store).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(store.value("w").get(0, 0), 2.0);
        assert_eq!(adam.step_count(), 0);
    }
}

use serde::{Deserialize, Serialize};

use super::{ParamStore, TensorError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily, one pair per
/// parameter slot of the store it is stepped against.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter of `params` from its accumulated
    /// gradient. Frozen parameters are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<(), TensorError> {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps) = (T::of(c.lr), T::of(c.epsilon));
        let (bc1, bc2) = (T::of(bc1), T::of(bc2));

        if self.moments.len() < params.len() {
            self.moments.resize_with(params.len(), || None);
        }
        for (slot, p) in self.moments.iter_mut().zip(params.iter_mut()) {
            let Some(grad) = p.grad.as_ref() else { continue };
            let n = p.value.len();
            let (m, v) = slot.get_or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
            if m.len() != n {
                return Err(TensorError::Dimension {
                    op: "adam_step",
                    lhs: vec![m.len()],
                    rhs: vec![n],
                });
            }
            for (((w, &g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(values.to_vec()));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store(&[0.5, -1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data(), &[0.5, -1.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = store(&[0.0, 0.0]);
        s.iter_mut().next().unwrap().grad = Some(Tensor::vector(vec![0.3, -7.0]));
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s).unwrap();
        let w = s.iter().next().unwrap().value.data().to_vec();
        // m̂ = g, v̂ = g², update = -lr·g/(|g|+ε)
        assert!((w[0] + 1e-3 * 0.3 / (0.3 + 1e-8)).abs() < 1e-15);
        assert!((w[1] - 1e-3 * 7.0 / (7.0 + 1e-8)).abs() < 1e-15);
        assert!((w[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn step_counter_increments() {
        let mut s = store(&[1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        for i in 1..=5 {
            adam.step(&mut s).unwrap();
            assert_eq!(adam.step_count(), i);
        }
    }

    #[test]
    fn frozen_params_untouched() {
        let mut s = store(&[1.0]);
        s.iter_mut().next().unwrap().grad = Some(Tensor::vector(vec![1.0]));
        s.set_trainable(false);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data(), &[1.0]);
    }
}

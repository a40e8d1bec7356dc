//! Bias-corrected Adam over named trainable tensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

/// Optimizer state. Moments are keyed by tensor name so the state can be
/// checkpointed; they exist only for tensors that have actually been stepped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moment: BTreeMap<String, Vec<f64>>,
    pub second_moment: BTreeMap<String, Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update over the listed tensors. Frozen tensors are skipped
    /// entirely (no moments, no value change); gradients of updated tensors
    /// are zeroed afterwards. A missing gradient counts as zero.
    pub fn adam_step(&mut self, trainables: &[(String, Tensor)], lr: f64) {
        let items: Vec<(String, Tensor, f64)> = trainables
            .iter()
            .map(|(name, tensor)| (name.clone(), tensor.clone(), 1.0))
            .collect();
        self.adam_step_scaled(&items, lr);
    }

    /// `adam_step` with a per-tensor learning-rate scale (parameter groups).
    pub fn adam_step_scaled(&mut self, trainables: &[(String, Tensor, f64)], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, tensor, lr_scale) in trainables {
            if !tensor.requires_grad() {
                continue;
            }
            let grad = tensor
                .grad()
                .unwrap_or_else(|| vec![0.0; tensor.numel()]);
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            debug_assert_eq!(m.len(), grad.len(), "moment shape drift for {name}");
            let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
            let rate = lr * lr_scale;
            tensor.update_values(|i, value| {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *value -= rate * m_hat / (v_hat.sqrt() + eps);
            });
            tensor.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_values_unchanged() {
        let t = Tensor::param(vec![1.0, -2.0], &[2]).unwrap();
        let mut state = AdamState::new();
        state.adam_step(&[("t".into(), t.clone())], 0.1);
        assert_eq!(t.to_vec(), vec![1.0, -2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn frozen_tensor_with_stale_grad_is_untouched() {
        let t = Tensor::param(vec![1.0], &[1]).unwrap();
        t.accumulate_grad(&[5.0]);
        t.set_requires_grad(false);
        // freezing drops the grad, but even a hand-planted one must not move it
        let frozen = Tensor::from_vec(vec![3.0], &[1]).unwrap();
        let mut state = AdamState::new();
        state.adam_step(
            &[("a".into(), t.clone()), ("b".into(), frozen.clone())],
            0.5,
        );
        assert_eq!(t.to_vec(), vec![1.0]);
        assert_eq!(frozen.to_vec(), vec![3.0]);
        assert!(state.first_moment.is_empty());
    }

    #[test]
    fn first_step_with_unit_grad_moves_by_lr() {
        let t = Tensor::param(vec![0.0], &[1]).unwrap();
        t.accumulate_grad(&[1.0]);
        let mut state = AdamState::new();
        state.adam_step(&[("t".into(), t.clone())], 0.1);
        // bias-corrected m_hat = 1, v_hat = 1 at step 1, so the move is
        // -lr / (1 + eps)
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((t.to_vec()[0] - expect).abs() < 1e-15);
        assert!(t.grad().is_none(), "gradients are zeroed after the step");
    }

    #[test]
    fn moments_persist_across_steps() {
        let t = Tensor::param(vec![0.0], &[1]).unwrap();
        let mut state = AdamState::new();
        for _ in 0..3 {
            t.accumulate_grad(&[1.0]);
            state.adam_step(&[("t".into(), t.clone())], 0.1);
        }
        assert_eq!(state.step, 3);
        let m = &state.first_moment["t"];
        // m after 3 steps of g=1: 1 - beta1^3
        assert!((m[0] - (1.0 - 0.9f64.powi(3))).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a list of flat parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_tensors(config: AdamConfig, tensors: &[&[f64]]) -> Self {
        Self::new(config, &tensors.iter().map(|t| t.len()).collect::<Vec<_>>())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every tensor.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                context: "adam tensor count",
                expected: self.first.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    context: "adam tensor size",
                    expected: m.len(),
                    actual: p.len(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Update a network's parameters from its gradients.
pub fn adam_step(params: &mut super::ParamStore, grads: &super::Gradients, state: &mut AdamState) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.step(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        state.step(&mut [&mut p[..]], &[&g[..]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for g in [0.3, -5.0, 1e-2] {
            let mut p = vec![0.0];
            let mut state = AdamState::new(AdamConfig::default(), &[1]);
            state.step(&mut [&mut p[..]], &[&[g][..]]).unwrap();
            let expect = -1e-3 * g / (g.abs() + 1e-8);
            assert!((p[0] - expect).abs() < 1e-15, "g = {g}: {} vs {expect}", p[0]);
        }
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![0.5, -0.5];
            let mut state = AdamState::new(AdamConfig::default(), &[2]);
            for k in 0..50 {
                let g = [p[0] * 2.0 + k as f64 * 0.01, p[1] - 1.0];
                state.step(&mut [&mut p[..]], &[&g[..]]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn size_mismatch_rejected() {
        let mut p = vec![0.0; 2];
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        assert!(state.step(&mut [&mut p[..]], &[&[0.0, 0.0][..]]).is_err());
    }
}

//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{MlpParams, ParamGrads};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: ParamGrads,
    v: ParamGrads,
    step: u64,
}

impl AdamState {
    pub fn new(p: &MlpParams, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: ParamGrads::zeros_like(p),
            v: ParamGrads::zeros_like(p),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step: `θ ← θ − lr·m̂/(√v̂ + ε)`. To ascend an objective,
    /// pass the negated gradient.
    pub fn step(&mut self, p: &mut MlpParams, grads: &ParamGrads) -> Result<()> {
        if grads.layers.len() != p.layers.len() {
            return Err(Error::LengthMismatch {
                context: "adam gradients",
                expected: p.layers.len(),
                got: grads.layers.len(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("adam gradients".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for ((layer, g), (m, v)) in p
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            let update = |theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..theta.len() {
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    theta[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            };
            update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(p: &mut MlpParams, grads: &ParamGrads, st: &mut AdamState) -> Result<()> {
    st.step(p, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Activation};

    fn small_net(seed: u64) -> MlpParams {
        init_params(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], seed).unwrap()
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = small_net(1);
        let before = p.flat();
        let grads = ParamGrads::zeros_like(&p);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &grads, &mut st).unwrap();
        assert_eq!(p.flat(), before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn constant_gradient_update_approaches_learning_rate() {
        // With a constant gradient, m̂ → g and v̂ → g², so the per-step move
        // tends to lr·sign(g).
        let mut p = small_net(2);
        let mut grads = ParamGrads::zeros_like(&p);
        for l in &mut grads.layers {
            for g in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *g = 0.37;
            }
        }
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(&p, cfg);
        let mut last = p.flat();
        for _ in 0..999 {
            adam_step(&mut p, &grads, &mut st).unwrap();
            last = p.flat();
        }
        adam_step(&mut p, &grads, &mut st).unwrap();
        let now = p.flat();
        for (a, b) in now.iter().zip(&last) {
            let delta = (a - b).abs();
            assert!(
                (delta - cfg.learning_rate).abs() < 0.01 * cfg.learning_rate,
                "step magnitude {delta}"
            );
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = small_net(3);
            let mut grads = ParamGrads::zeros_like(&p);
            let mut x = 0.1;
            for l in &mut grads.layers {
                for g in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                    *g = x;
                    x = -x * 0.99;
                }
            }
            let mut st = AdamState::new(&p, AdamConfig::default());
            for _ in 0..50 {
                adam_step(&mut p, &grads, &mut st).unwrap();
            }
            p.flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut p = small_net(4);
        let mut grads = ParamGrads::zeros_like(&p);
        grads.layers[0].weights[0] = f64::NAN;
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(
            adam_step(&mut p, &grads, &mut st),
            Err(Error::NonFinite(_))
        ));
    }
}

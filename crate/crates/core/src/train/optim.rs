//! Adam optimizer with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::grad::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first and second moment state.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, param_sizes: &[usize]) -> Self {
        Adam {
            cfg,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update over all parameters; `grads` must align with `params`.
    /// Errors on non-finite gradients.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &[(String, Vec<f64>)]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "optimizer got {} parameter tensors and {} gradients",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for (k, ((name, param), (gname, grad))) in params.iter_mut().zip(grads).enumerate() {
            if name != gname {
                return Err(Error::shape(format!(
                    "gradient order mismatch: {name} vs {gname}"
                )));
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!("non-finite gradient in {name}")));
            }
            let values = param.values_mut();
            for i in 0..values.len() {
                let g = grad[i];
                self.m[k][i] = self.cfg.beta1 * self.m[k][i] + (1.0 - self.cfg.beta1) * g;
                self.v[k][i] = self.cfg.beta2 * self.v[k][i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = self.m[k][i] / bc1;
                let v_hat = self.v[k][i] / bc2;
                values[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_computation() {
        // With m = (1−β1)g and v = (1−β2)g², bias correction makes the
        // first update exactly lr·g/(|g| + ε·√(1−β2))·... reduced: for a
        // single scalar, m̂ = g, v̂ = g², so Δ = lr·g/(|g|+ε) ≈ lr·sign(g).
        let cfg = AdamConfig::default();
        let mut t = Tensor::scalar(1.0);
        let mut adam = Adam::new(cfg.clone(), &[1]);
        let mut params = vec![("p".to_string(), &mut t)];
        adam.step(&mut params, &[("p".to_string(), vec![0.5])]).unwrap();
        let expect = 1.0 - cfg.learning_rate * 0.5 / (0.5 + cfg.epsilon);
        assert!((t.values()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut t = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &[1]);
        let mut params = vec![("p".to_string(), &mut t)];
        assert!(adam
            .step(&mut params, &[("p".to_string(), vec![f64::NAN])])
            .is_err());
    }
}

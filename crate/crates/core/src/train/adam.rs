use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} entries, params {} and grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite gradient {} at parameter {i} (step {})",
                grads[i],
                self.t + 1
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = [1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = [0.5];
        s.step(&mut p, &[1.0], 0.01).unwrap();
        assert!((p[0] - (0.5 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        for _ in 0..10 {
            let before = p[0];
            s.step(&mut p, &[1.0], 0.01).unwrap();
            assert!((before - p[0] - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn entries_update_independently() {
        let mut a = AdamState::new(2, AdamConfig::default());
        let mut p = [0.0, 0.0];
        a.step(&mut p, &[1.0, 0.0], 0.1).unwrap();
        assert!(p[0] < 0.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = [0.0, 0.0];
        assert!(matches!(s.step(&mut p, &[1.0, f64::NAN], 0.1), Err(Error::Diverged(_))));
        assert_eq!(s.t, 0);
    }
}

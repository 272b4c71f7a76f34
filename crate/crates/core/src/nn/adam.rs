use serde::{Deserialize, Serialize};

use super::{NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    /// Applies one step. A non-finite gradient rejects the whole update and
    /// leaves both `params` and the moments untouched.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "adam state covers {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        self.t += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        // fold both bias corrections into the step size
        let step = T::lit(
            c.alpha * (1.0 - c.beta2.powi(self.t as i32)).sqrt() / (1.0 - c.beta1.powi(self.t as i32)),
        );
        let eps_hat = T::lit(c.epsilon * (1.0 - c.beta2.powi(self.t as i32)).sqrt());
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps_hat);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook Adam with explicit bias-corrected moments.
    fn reference_steps(grads: &[f64], cfg: AdamConfig) -> Vec<f64> {
        let (mut m, mut v, mut p) = (0.0, 0.0, 0.0);
        let mut out = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            p -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
            out.push(p);
        }
        out
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::<f64>::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            state.update(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.t, 5);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut state = AdamState::<f64>::new(1, AdamConfig::default());
        let mut p = vec![0.3];
        state.update(&mut p, &[4.0]).unwrap();
        assert!((0.3 - p[0] - 0.001).abs() < 1e-9);
        let before = p[0];
        state.update(&mut p, &[4.0]).unwrap();
        assert!((before - p[0] - 0.001).abs() < 1e-9);
    }

    #[test]
    fn matches_textbook_formulation() {
        let grads = [0.5, -1.2, 3.0, 0.0, 0.01, -0.7];
        let cfg = AdamConfig::default();
        let want = reference_steps(&grads, cfg);
        let mut state = AdamState::<f64>::new(1, cfg);
        let mut p = vec![0.0];
        for (g, w) in grads.iter().zip(want) {
            state.update(&mut p, &[*g]).unwrap();
            assert!((p[0] - w).abs() < 1e-12, "{} vs {}", p[0], w);
        }
    }

    #[test]
    fn non_finite_gradient_rejects_update() {
        let mut state = AdamState::<f32>::new(3, AdamConfig::default());
        let mut p = vec![1.0f32; 3];
        let err = state.update(&mut p, &[0.1, f32::NAN, 0.2]).unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient { index: 1 });
        assert_eq!(p, vec![1.0; 3]);
        assert_eq!(state.t, 0);
        assert!(state.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let cfg = AdamConfig { alpha: 0.0, ..AdamConfig::default() };
        let mut state = AdamState::<f32>::new(2, cfg);
        let mut p = vec![0.25f32, -0.5];
        state.update(&mut p, &[3.0, -1.0]).unwrap();
        assert_eq!(p, vec![0.25, -0.5]);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Bias-corrected update. Returns `Ok(false)` and leaves everything
    /// untouched when any gradient is non-finite.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            log::warn!("skipping optimizer step: gradient {i} is {}", grads[i]);
            return Ok(false);
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut adam = Adam::new(3, 0.01);
        let mut p = vec![0.0; 3];
        adam.update(&mut p, &[5.0, -0.3, 1e-3]).unwrap();
        for (v, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - s * 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_gradient_drifts_with_bounded_steps() {
        let mut adam = Adam::new(1, 0.01);
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..100 {
            adam.update(&mut p, &[2.0]).unwrap();
            let step = prev - p[0];
            assert!(step > 0.0 && step <= 0.01 + 1e-12);
            prev = p[0];
        }
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut adam = Adam::new(2, 0.01);
        let mut p = vec![1.0, 1.0];
        assert!(!adam.update(&mut p, &[f64::NAN, 1.0]).unwrap());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.step, 0);
        assert!(adam.update(&mut p, &[1.0]).is_err());
    }
}

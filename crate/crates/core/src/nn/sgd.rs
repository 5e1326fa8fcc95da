//! Plain stochastic gradient descent with optional heavy-ball momentum.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    /// `param_lens` lists the length of each parameter slice the optimizer
    /// will be stepped with.
    pub fn new(learning_rate: f64, momentum: f64, param_lens: &[usize]) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} must be finite and >= 0"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(SgdState {
            learning_rate,
            momentum,
            velocity: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// `v ← μ·v + g; p ← p − lr·v`. With zero momentum this is exactly
    /// `p ← p − lr·g`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::shape(
                "sgd_step",
                (params.len(), self.velocity.len()),
                (grads.len(), self.velocity.len()),
            ));
        }
        for ((p, g), v) in params.iter().zip(grads).zip(&self.velocity) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::shape("sgd_step", (p.len(), 1), (g.len(), 1)));
            }
        }
        let lr = self.learning_rate;
        if self.momentum == 0.0 {
            for (p, g) in params.iter_mut().zip(grads) {
                for (pi, gi) in p.iter_mut().zip(g.iter()) {
                    *pi -= lr * gi;
                }
            }
            return Ok(());
        }
        let mu = self.momentum;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = mu * *vi + gi;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let mut s = SgdState::new(0.1, 0.0, &[1]).unwrap();
        let mut p = [1.0];
        s.step(&mut [&mut p], &[&[2.0]]).unwrap();
        assert_eq!(p[0], 1.0 - 0.1 * 2.0);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = SgdState::new(0.5, 0.9, &[3]).unwrap();
        let mut p = [1.0, -2.0, 3.5];
        s.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn momentum_matches_scalar_recurrence() {
        let (lr, mu) = (0.1, 0.9);
        let grads = [2.0, -1.0, 0.5];
        let (mut p_ref, mut v_ref) = (1.0f64, 0.0f64);
        for g in grads {
            v_ref = mu * v_ref + g;
            p_ref -= lr * v_ref;
        }
        let mut s = SgdState::new(lr, mu, &[1]).unwrap();
        let mut p = [1.0];
        for g in grads {
            s.step(&mut [&mut p], &[&[g]]).unwrap();
        }
        assert!((p[0] - p_ref).abs() < 1e-15);
        // 1 - 0.1·2 - 0.1·0.8 - 0.1·1.22
        assert!((p[0] - 0.598).abs() < 1e-12);
        assert_eq!(s.velocity()[0].len(), 1);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut s = SgdState::new(0.1, 0.0, &[2]).unwrap();
        let mut p = [1.0, 2.0];
        assert!(s.step(&mut [&mut p], &[&[1.0]]).is_err());
        assert!(s.step(&mut [&mut p, &mut [0.0]], &[&[1.0, 1.0], &[1.0]]).is_err());
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        assert!(SgdState::new(-0.1, 0.0, &[1]).is_err());
        assert!(SgdState::new(0.1, 1.0, &[1]).is_err());
    }
}

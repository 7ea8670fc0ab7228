use serde::{Deserialize, Serialize};

use super::ParamBlocks;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// First and second moment estimates for one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl AdamState {
    pub fn new<P: ParamBlocks + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let moments = params
            .blocks()
            .into_iter()
            .map(|(name, b)| Moments {
                name,
                m: vec![0.0; b.len()],
                v: vec![0.0; b.len()],
            })
            .collect();
        AdamState {
            config,
            step: 0,
            moments,
        }
    }

    /// One bias-corrected ADAM update. Nothing is modified if any gradient is
    /// non-finite or the blocks do not line up.
    pub fn step<P: ParamBlocks + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        let mut param_blocks = params.blocks_mut();
        if grad_blocks.len() != self.moments.len() || param_blocks.len() != self.moments.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} blocks, got {} params / {} grads",
                self.moments.len(),
                param_blocks.len(),
                grad_blocks.len()
            )));
        }
        for ((mom, (pname, p)), (gname, g)) in self.moments.iter().zip(&param_blocks).zip(&grad_blocks) {
            if mom.name != *pname || mom.name != *gname || mom.m.len() != p.len() || g.len() != p.len() {
                return Err(Error::Shape(format!(
                    "adam block {} does not match parameter {pname} / gradient {gname}",
                    mom.name
                )));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {gname}[{i}] = {}", g[i])));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for ((mom, (_, p)), (_, g)) in self.moments.iter_mut().zip(param_blocks.iter_mut()).zip(&grad_blocks) {
            for i in 0..p.len() {
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use crate::nn::Matrix;

    fn dense(vals: &[f64]) -> Dense {
        Dense::from_weight(Matrix::from_vec(1, vals.len(), vals.to_vec()).unwrap(), None)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = dense(&[0.5, -1.5, 2.0]);
        let before = p.clone();
        let g = p.zeros_like();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = dense(&[0.0, 1.0]);
        let g = dense(&[1.0, 1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.step(&mut p, &g).unwrap();
        // m̂ = 0.1/0.1 = 1, v̂ = 0.001/0.001 = 1, Δ = -α / (1 + ε)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.weight.get(0, 0) - expected).abs() < 1e-15);
        assert!((p.weight.get(0, 1) - (1.0 + expected)).abs() < 1e-15);
    }

    #[test]
    fn repeated_steps_are_bit_identical() {
        let run = || {
            let mut p = dense(&[0.3, -0.7]);
            let g = dense(&[0.25, -3.0]);
            let mut adam = AdamState::new(AdamConfig::default(), &p);
            adam.step(&mut p, &g).unwrap();
            adam.step(&mut p, &g).unwrap();
            (p, adam)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_trapped_without_update() {
        let mut p = dense(&[1.0, 2.0]);
        let g = dense(&[0.1, f64::NAN]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref msg) if msg.contains("weight[1]")));
        assert_eq!(p, dense(&[1.0, 2.0]));
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn mismatched_blocks_rejected() {
        let mut p = dense(&[1.0, 2.0]);
        let g = dense(&[0.1, 0.2, 0.3]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(matches!(adam.step(&mut p, &g), Err(Error::Shape(_))));
    }
}

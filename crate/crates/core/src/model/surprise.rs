use serde::{Deserialize, Serialize};

use super::switching::mean_abs_error;
use crate::nn::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurpriseConfig {
    /// Low-pass rate for the running mean and variance.
    pub rate: f64,
    /// Offset of the squashing sigmoid.
    pub theta0: f64,
    /// Slope applied to the z-scored error.
    pub theta1: f64,
    pub sigma_floor: f64,
}

impl Default for SurpriseConfig {
    fn default() -> Self {
        SurpriseConfig {
            rate: 0.1,
            theta0: 4.0,
            theta1: 8.0,
            sigma_floor: 1e-3,
        }
    }
}

/// Online surprise from prediction error.
///
/// Keeps low-pass estimates of the mean and variance of the per-step error
/// and squashes the z-score of each new error against the statistics seen so
/// far: `x_s = σ(θ1·(e − μ)/max(σ, floor) − θ0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurpriseEstimator {
    pub config: SurpriseConfig,
    pub mean: f64,
    pub var: f64,
}

impl SurpriseEstimator {
    pub fn new(config: SurpriseConfig) -> Self {
        SurpriseEstimator {
            config,
            mean: 0.0,
            var: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.mean = 0.0;
        self.var = 0.0;
    }

    pub fn sigma(&self) -> f64 {
        self.var.sqrt().max(self.config.sigma_floor)
    }

    /// Surprise of `error` under the current statistics, without updating.
    pub fn score(&self, error: f64) -> f64 {
        let c = &self.config;
        sigmoid(c.theta1 * (error - self.mean) / self.sigma() - c.theta0)
    }

    /// Scores `error`, then folds it into the running statistics.
    pub fn observe(&mut self, error: f64) -> f64 {
        let x_s = self.score(error);
        let r = self.config.rate;
        let dev = error - self.mean;
        self.mean = (1.0 - r) * self.mean + r * error;
        self.var = (1.0 - r) * self.var + r * dev * dev;
        x_s
    }

    /// Surprise from the mean absolute difference between prediction and target.
    pub fn update(&mut self, y_act: &[f64], y_hat: &[f64]) -> f64 {
        self.observe(mean_abs_error(y_act, y_hat))
    }
}

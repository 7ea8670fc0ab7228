use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{check_len, sigmoid, Matrix, ParamBlocks};

/// Maps the gate drive `x_s` to the update-gate value
/// `x_ζ = σ(θ0 − θ1·x_s)`.
///
/// Large `x_s` drives `x_ζ` toward 0, which replaces the held latent state;
/// `x_s = 0` keeps `x_ζ ≈ 0.98` (hold).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateShape {
    pub theta0: f64,
    pub theta1: f64,
}

impl Default for GateShape {
    fn default() -> Self {
        GateShape {
            theta0: 4.0,
            theta1: 8.0,
        }
    }
}

impl GateShape {
    pub fn zeta(&self, x_s: f64) -> f64 {
        sigmoid(self.theta0 - self.theta1 * x_s)
    }

    /// `dx_ζ/dx_s` expressed through the gate value.
    pub fn dzeta_dxs(&self, zeta: f64) -> f64 {
        -self.theta1 * zeta * (1.0 - zeta)
    }
}

/// The gate counts as open when the new input dominates the convex mix.
pub fn is_open(x_zeta: f64) -> bool {
    1.0 - x_zeta > 0.5
}

/// Weights of the event switching layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingLayer {
    /// anticipation output → input layer
    pub w_a: Matrix,
    /// previous hidden state → input layer
    pub w_eta: Matrix,
    /// hidden state → latent code
    pub w_o: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingOutput {
    pub x_zeta: f64,
    pub x_eta: Vec<f64>,
    pub x_h: Vec<f64>,
    pub x_o: Vec<f64>,
}

impl SwitchingLayer {
    pub fn new<R: Rng + ?Sized>(anticipation: usize, hidden: usize, rng: &mut R) -> Self {
        let b_in = 1.0 / ((anticipation + hidden) as f64).sqrt();
        let b_out = 1.0 / (hidden as f64).sqrt();
        SwitchingLayer {
            w_a: Matrix::uniform(hidden, anticipation, b_in, rng),
            w_eta: Matrix::uniform(hidden, hidden, b_in, rng),
            w_o: Matrix::uniform(hidden, hidden, b_out, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        SwitchingLayer {
            w_a: Matrix::zeros(self.w_a.rows(), self.w_a.cols()),
            w_eta: Matrix::zeros(self.w_eta.rows(), self.w_eta.cols()),
            w_o: Matrix::zeros(self.w_o.rows(), self.w_o.cols()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_eta.rows()
    }

    pub fn anticipation_width(&self) -> usize {
        self.w_a.cols()
    }

    /// Full forward pass with the gate driven by `x_s`.
    pub fn forward(&self, gate: &GateShape, x_a: &[f64], x_s: f64, x_h_prev: &[f64]) -> Result<SwitchingOutput> {
        self.forward_with_gate(gate.zeta(x_s), x_a, x_h_prev)
    }

    /// Forward pass with an explicit gate value.
    pub fn forward_with_gate(&self, x_zeta: f64, x_a: &[f64], x_h_prev: &[f64]) -> Result<SwitchingOutput> {
        check_len("switching input x_a", x_a.len(), self.anticipation_width())?;
        check_len("switching state x_h", x_h_prev.len(), self.hidden())?;
        // linear input layer
        let mut x_eta = self.w_a.matvec(x_a);
        self.w_eta.matvec_acc(x_h_prev, &mut x_eta);
        let x_h: Vec<f64> = x_h_prev
            .iter()
            .zip(&x_eta)
            .map(|(prev, new)| x_zeta * prev + (1.0 - x_zeta) * new)
            .collect();
        // linear read-out
        let x_o = self.w_o.matvec(&x_h);
        Ok(SwitchingOutput {
            x_zeta,
            x_eta,
            x_h,
            x_o,
        })
    }
}

impl ParamBlocks for SwitchingLayer {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_a".to_string(), self.w_a.as_slice()),
            ("w_eta".to_string(), self.w_eta.as_slice()),
            ("w_o".to_string(), self.w_o.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("w_a".to_string(), self.w_a.as_mut_slice()),
            ("w_eta".to_string(), self.w_eta.as_mut_slice()),
            ("w_o".to_string(), self.w_o.as_mut_slice()),
        ]
    }
}

pub(crate) fn mean_abs_error(y: &[f64], target: &[f64]) -> f64 {
    y.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len().max(1) as f64
}

/// Counterfactual regularization of the gate gradient:
/// `δ_reg = δ + β·(mean|y_act − ŷ| − mean|y_cf − ŷ|)`.
///
/// `delta_zeta` is the loss gradient at the gate opening `1 − x_ζ`. A
/// positive correction (opening made the prediction worse) shrinks the
/// opening on the next descent step; a negative one rewards it.
pub fn cfr_gate_gradient(delta_zeta: f64, beta: f64, y_act: &[f64], y_cf: &[f64], y_hat: &[f64]) -> f64 {
    delta_zeta + beta * (mean_abs_error(y_act, y_hat) - mean_abs_error(y_cf, y_hat))
}

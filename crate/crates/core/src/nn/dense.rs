use rand::Rng;

use super::{check_len, Matrix, ParamBlocks};
use crate::error::Result;

/// Fully connected linear layer, `y = W x (+ b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl Dense {
    /// Uniform init in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weight = Matrix::uniform(outputs, inputs, bound, rng);
        let bias = bias.then(|| vec![0.0; outputs]);
        Dense { weight, bias }
    }

    pub fn from_weight(weight: Matrix, bias: Option<Vec<f64>>) -> Self {
        Dense { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// Same shape, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Dense {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: self.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", x.len(), self.inputs())?;
        let mut y = self.weight.matvec(x);
        if let Some(b) = &self.bias {
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi += bi;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense) -> Result<Vec<f64>> {
        check_len("dense input", x.len(), self.inputs())?;
        check_len("dense output gradient", dy.len(), self.outputs())?;
        grads.weight.add_outer(dy, x);
        if let Some(gb) = &mut grads.bias {
            for (g, d) in gb.iter_mut().zip(dy) {
                *g += d;
            }
        }
        Ok(self.weight.matvec_t(dy))
    }
}

impl ParamBlocks for Dense {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("weight".to_string(), self.weight.as_slice())];
        if let Some(b) = &self.bias {
            out.push(("bias".to_string(), b.as_slice()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("weight".to_string(), self.weight.as_mut_slice())];
        if let Some(b) = &mut self.bias {
            out.push(("bias".to_string(), b.as_mut_slice()));
        }
        out
    }
}

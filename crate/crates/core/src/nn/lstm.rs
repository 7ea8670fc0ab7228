use rand::Rng;

use super::{check_len, sigmoid, Matrix, ParamBlocks};
use crate::error::{Error, Result};

/// LSTM cell without peepholes.
///
/// Gate rows are stacked as `[input; forget; candidate; output]`, each `hidden`
/// rows tall.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Vec<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmCell {
    /// Uniform init in `±1/√(inputs + hidden)`, forget bias 1.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((inputs + hidden).max(1) as f64).sqrt();
        let w_x = Matrix::uniform(4 * hidden, inputs, bound, rng);
        let w_h = Matrix::uniform(4 * hidden, hidden, bound, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        LstmCell { w_x, w_h, bias }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: Matrix::zeros(4 * hidden, inputs),
            w_h: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmCell::zeros(self.inputs(), self.hidden())
    }

    pub fn inputs(&self) -> usize {
        self.w_x.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
        let hd = self.hidden();
        check_len("lstm input", x.len(), self.inputs())?;
        check_len("lstm hidden state", h_prev.len(), hd)?;
        check_len("lstm cell state", c_prev.len(), hd)?;

        let mut pre = self.bias.clone();
        self.w_x.matvec_acc(x, &mut pre);
        self.w_h.matvec_acc(h_prev, &mut pre);

        let input_gate: Vec<f64> = pre[..hd].iter().map(|&v| sigmoid(v)).collect();
        let forget_gate: Vec<f64> = pre[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let candidate: Vec<f64> = pre[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
        let output_gate: Vec<f64> = pre[3 * hd..].iter().map(|&v| sigmoid(v)).collect();

        let c: Vec<f64> = (0..hd)
            .map(|j| forget_gate[j] * c_prev[j] + input_gate[j] * candidate[j])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|j| output_gate[j] * tanh_c[j]).collect();

        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            tanh_c,
        };
        Ok((h, c, cache))
    }

    /// Backward through one step. Parameter gradients are accumulated into
    /// `grads`; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hd = self.hidden();
        if cache.x.len() != self.inputs() || cache.h_prev.len() != hd || cache.tanh_c.len() != hd {
            return Err(Error::InvalidInput(format!(
                "lstm cache does not belong to a {}->{} cell",
                self.inputs(),
                hd
            )));
        }
        check_len("lstm dh", dh.len(), hd)?;
        check_len("lstm dc", dc.len(), hd)?;
        if grads.inputs() != self.inputs() || grads.hidden() != hd {
            return Err(Error::Shape("lstm gradient accumulator has wrong shape".into()));
        }

        let mut dpre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (
                cache.input_gate[j],
                cache.forget_gate[j],
                cache.candidate[j],
                cache.output_gate[j],
            );
            let tc = cache.tanh_c[j];
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dpre[j] = dct * g * i * (1.0 - i);
            dpre[hd + j] = dct * cache.c_prev[j] * f * (1.0 - f);
            dpre[2 * hd + j] = dct * i * (1.0 - g * g);
            dpre[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dct * f;
        }

        grads.w_x.add_outer(&dpre, &cache.x);
        grads.w_h.add_outer(&dpre, &cache.h_prev);
        for (b, d) in grads.bias.iter_mut().zip(&dpre) {
            *b += d;
        }
        let dx = self.w_x.matvec_t(&dpre);
        let dh_prev = self.w_h.matvec_t(&dpre);
        Ok((dx, dh_prev, dc_prev))
    }
}

impl ParamBlocks for LstmCell {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_x".to_string(), self.w_x.as_slice()),
            ("w_h".to_string(), self.w_h.as_slice()),
            ("bias".to_string(), self.bias.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("w_x".to_string(), self.w_x.as_mut_slice()),
            ("w_h".to_string(), self.w_h.as_mut_slice()),
            ("bias".to_string(), self.bias.as_mut_slice()),
        ]
    }
}

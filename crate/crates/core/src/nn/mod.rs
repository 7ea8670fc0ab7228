//! Minimal numerical engine: dense layers and LSTM cells with hand-written
//! gradients, ADAM, and a central-difference gradient checker.

mod adam;
mod dense;
mod gradcheck;
mod lstm;
mod tensor;

pub use adam::{AdamConfig, AdamState, Moments};
pub use dense::Dense;
pub use gradcheck::{grad_check, relative_error, BlockReport, GradCheckReport};
pub use lstm::{LstmCache, LstmCell};
pub use tensor::Matrix;

use crate::error::{Error, Result};

/// Anything that owns named, flat blocks of trainable `f64` values.
///
/// Gradient accumulators use the same type as the parameters they belong to,
/// so `blocks()` on a gradient and `blocks_mut()` on the parameters line up
/// one-to-one.
pub trait ParamBlocks {
    fn blocks(&self) -> Vec<(String, &[f64])>;
    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, b) in self.blocks_mut() {
            b.fill(0.0);
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (name, b) in self.blocks() {
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name}[{i}]")));
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}

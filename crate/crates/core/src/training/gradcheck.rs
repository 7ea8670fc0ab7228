use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::derive_seed;
use crate::error::{Error, Result};
use crate::model::{GateMode, ModelConfig, StepInput, SugarModel, SugarVariant};
use crate::nn::{grad_check, GradCheckReport};
use crate::task::{generate_episode, TaskConfig};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

/// Result of checking one randomly initialised model.
#[derive(Clone, Debug)]
pub struct ModelGradCheck {
    pub variant: SugarVariant,
    pub seed: u64,
    pub steps: usize,
    /// Finite-difference check of the reconstruction-loss gradient.
    pub report: GradCheckReport,
    pub open_steps: usize,
    /// Every regularized gate gradient equals its direct recomputation bit for bit.
    pub cfr_exact: bool,
}

impl ModelGradCheck {
    pub fn passed(&self) -> bool {
        self.report.passed && self.cfr_exact && self.open_steps > 0
    }
}

impl fmt::Display for ModelGradCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "variant {} seed {}: {} steps, {} open, max relative error {:.3e}, cfr {}",
            self.variant,
            self.seed,
            self.steps,
            self.open_steps,
            self.report.max_relative_error(),
            if self.cfr_exact { "exact" } else { "MISMATCH" }
        )?;
        write!(f, "{}", self.report)
    }
}

/// Builds a random model, random recurrent state and a random episode of
/// `steps + 1` symbols, then checks the BPTT gradients against central
/// differences of the reconstruction loss and the gate-gradient correction
/// against a direct recomputation.
///
/// The boundary read-out bias is shifted so that the median gate drive sits
/// at 0.5, which guarantees a mix of open and closed steps.
pub fn check_gradients(variant: SugarVariant, seed: u64, steps: usize) -> Result<ModelGradCheck> {
    if !variant.has_boundary_module() {
        return Err(Error::InvalidInput(format!(
            "variant {variant} has no trainable gate pathway to check"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("gradient check needs at least one step".into()));
    }
    let task = TaskConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6772_6164, 0));
    let mut model = SugarModel::new(variant, ModelConfig::default(), task.eb.width(), &mut rng)?;
    let episode = generate_episode(&task, steps + 1, rng.gen())?;
    let inputs: Vec<StepInput<'_>> = (0..steps).map(|t| StepInput::from_episode(&episode, t)).collect();

    let mut state = model.initial_state();
    for v in [
        &mut state.h_p,
        &mut state.c_p,
        &mut state.h_a,
        &mut state.c_a,
        &mut state.h_b,
        &mut state.c_b,
        &mut state.x_h,
    ] {
        for x in v.iter_mut() {
            *x = rng.gen_range(-0.8..0.8);
        }
    }

    let drives = forward(&model, &state, &inputs)?.iter().map(|c| c.x_s).collect::<Vec<_>>();
    let mut sorted = drives.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let bias = &mut model.params.boundary.as_mut().expect("checked above").readout.bias;
    bias.as_mut().expect("boundary read-out has a bias")[0] += 0.5 - median;

    let caches = forward(&model, &state, &inputs)?;
    let open_steps = caches.iter().filter(|c| c.gate_open).count();

    let plain = model.bptt_backward_with(&caches, false)?;
    let analytic = SugarModel {
        params: plain.grads.clone(),
        ..model.clone()
    };
    let report = grad_check(
        &model,
        &analytic,
        |m| m.replay_loss(&state, &inputs).unwrap_or(f64::NAN),
        FD_STEP,
        GRADCHECK_TOLERANCE,
    );

    let regularized = model.bptt_backward_with(&caches, true)?;
    let mut cfr_exact = true;
    for (t, cache) in caches.iter().enumerate() {
        let expected = if cache.gate_open {
            let y_cf = model.counterfactual_forward(cache)?;
            if Some(&y_cf) != cache.y_cf.as_ref() {
                cfr_exact = false;
            }
            let target = cache.target.one_hot();
            let mae = |y: &[f64]| y.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
            regularized.delta_zeta[t] + (mae(&cache.y) - mae(&y_cf))
        } else {
            regularized.delta_zeta[t]
        };
        if regularized.delta_zeta_reg[t] != expected {
            cfr_exact = false;
        }
    }

    Ok(ModelGradCheck {
        variant,
        seed,
        steps,
        report,
        open_steps,
        cfr_exact,
    })
}

fn forward(
    model: &SugarModel,
    state: &crate::model::SugarState,
    inputs: &[StepInput<'_>],
) -> Result<Vec<crate::model::StepCache>> {
    let mut s = state.clone();
    inputs
        .iter()
        .enumerate()
        .map(|(t, i)| model.forward_step(&mut s, i, GateMode::Learned, t).map(|(_, c)| c))
        .collect()
}

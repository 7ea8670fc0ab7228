//! The SUGAR network: event processing, anticipation, switching and boundary
//! layers, in three gate-control variants.

mod sugar;
mod surprise;
mod switching;

pub use sugar::{
    Backward, BoundaryModule, GateMode, StepCache, StepInput, StepTrace, SugarModel, SugarParams,
    SugarState,
};
pub use surprise::{SurpriseConfig, SurpriseEstimator};
pub use switching::{cfr_gate_gradient, is_open, GateShape, SwitchingLayer, SwitchingOutput};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SugarVariant {
    /// Gate driven by surprise computed from the previous prediction error.
    A,
    /// Gate driven by a learned event-boundary module.
    B,
    /// As B, with counterfactual regularization of the gate gradient.
    C,
}

impl SugarVariant {
    pub fn has_boundary_module(self) -> bool {
        !matches!(self, SugarVariant::A)
    }

    pub fn uses_cfr(self) -> bool {
        matches!(self, SugarVariant::C)
    }
}

impl fmt::Display for SugarVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SugarVariant::A => "a",
            SugarVariant::B => "b",
            SugarVariant::C => "c",
        })
    }
}

impl FromStr for SugarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(SugarVariant::A),
            "b" => Ok(SugarVariant::B),
            "c" => Ok(SugarVariant::C),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

/// How the update gate is driven over an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatePolicy {
    /// The variant's own gate control.
    #[default]
    Learned,
    /// `x_ζ = 1` at every step.
    Closed,
    /// `x_s = 1` on the step before each switch, 0 elsewhere.
    Oracle,
}

impl GatePolicy {
    /// Gate mode for the step that predicts symbol `t + 1`, given the
    /// episode's sorted switch times.
    pub fn mode_at(self, switch_times: &[usize], t: usize) -> GateMode {
        match self {
            GatePolicy::Learned => GateMode::Learned,
            GatePolicy::Closed => GateMode::Closed,
            GatePolicy::Oracle => GateMode::Forced(if switch_times.binary_search(&(t + 1)).is_ok() { 1.0 } else { 0.0 }),
        }
    }
}

impl fmt::Display for GatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GatePolicy::Learned => "learned",
            GatePolicy::Closed => "closed",
            GatePolicy::Oracle => "oracle",
        })
    }
}

/// Layer sizes and fixed (non-trained) gate settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub processing_hidden: usize,
    pub anticipation_hidden: usize,
    pub boundary_hidden: usize,
    /// Width of the switching layer, and so of the latent event code.
    pub switching_hidden: usize,
    pub gate: GateShape,
    pub surprise: SurpriseConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            processing_hidden: 16,
            anticipation_hidden: 8,
            boundary_hidden: 8,
            switching_hidden: 4,
            gate: GateShape::default(),
            surprise: SurpriseConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("processing_hidden", self.processing_hidden),
            ("anticipation_hidden", self.anticipation_hidden),
            ("boundary_hidden", self.boundary_hidden),
            ("switching_hidden", self.switching_hidden),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let s = &self.surprise;
        if !(s.rate > 0.0 && s.rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("surprise rate {} outside (0, 1]", s.rate)));
        }
        if !(s.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig("sigma_floor must be positive".into()));
        }
        if !(self.gate.theta1 > 0.0) {
            return Err(Error::InvalidConfig("gate theta1 must be positive".into()));
        }
        Ok(())
    }
}

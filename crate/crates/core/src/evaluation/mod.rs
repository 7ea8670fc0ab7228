//! Inference runs over test episodes and the analyses built on their traces:
//! error profiles around switches, gate statistics, latent event codes.

mod codes;
mod gates;
mod profile;
mod report;

pub use codes::{
    compositional_analysis, compositional_check, extract_latent_codes, CompositionalCheck, CompositionalReport,
    LatentCodeSummary, ProblemCode,
};
pub use gates::{gate_stats, GateStats};
pub use profile::{boundary_profile, BoundaryProfile, MAX_OFFSET};
pub use report::{write_codes_csv, write_gates_csv, write_profile_csv, write_trace_csv};

use crate::error::Result;
use crate::model::{GatePolicy, StepInput, StepTrace, SugarModel};
use crate::task::{generate_episode, Episode};
use crate::training::{derive_seed, ExperimentConfig, SEED_TEST};

/// Per-step record of one inference run over one episode. Row `t` consumes
/// symbol `t` and predicts symbol `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    /// Problem generating each symbol.
    pub problem_id: Vec<u8>,
    pub switch_flag: Vec<bool>,
    pub switch_times: Vec<usize>,
    pub steps: Vec<StepTrace>,
}

impl EpisodeTrace {
    /// Mean absolute prediction error over all steps.
    pub fn mean_error(&self) -> f64 {
        self.steps.iter().map(|s| s.error).sum::<f64>() / self.steps.len().max(1) as f64
    }

    pub fn gate_openings(&self) -> usize {
        self.steps.iter().filter(|s| s.gate_open).count()
    }
}

/// Runs `model` from a fresh state over a whole episode.
pub fn run_episode(model: &SugarModel, episode: &Episode, policy: GatePolicy) -> Result<EpisodeTrace> {
    let mut state = model.initial_state();
    let rows = episode.len() - 1;
    let mut steps = Vec::with_capacity(rows);
    for t in 0..rows {
        let mode = policy.mode_at(&episode.switch_times, t);
        let (trace, _) = model.forward_step(&mut state, &StepInput::from_episode(episode, t), mode, t)?;
        steps.push(trace);
    }
    Ok(EpisodeTrace {
        problem_id: episode.problem_id.clone(),
        switch_flag: episode.switch_flag.clone(),
        switch_times: episode.switch_times.clone(),
        steps,
    })
}

pub fn run_model(model: &SugarModel, episodes: &[Episode]) -> Result<Vec<EpisodeTrace>> {
    episodes.iter().map(|e| run_episode(model, e, GatePolicy::Learned)).collect()
}

/// Inference with the update gate held shut.
pub fn run_baseline_closed(model: &SugarModel, episodes: &[Episode]) -> Result<Vec<EpisodeTrace>> {
    episodes.iter().map(|e| run_episode(model, e, GatePolicy::Closed)).collect()
}

/// Inference with the gate opened exactly once per switch, on the step that
/// predicts the first symbol of the new event.
pub fn run_oracle_gate(model: &SugarModel, episodes: &[Episode]) -> Result<Vec<EpisodeTrace>> {
    episodes.iter().map(|e| run_episode(model, e, GatePolicy::Oracle)).collect()
}

/// Test episodes for an experiment, drawn from a seed stream disjoint from
/// the training stream.
pub fn test_episodes(config: &ExperimentConfig) -> Result<Vec<Episode>> {
    (0..config.eval.episodes)
        .map(|i| {
            let seed = derive_seed(config.seed, SEED_TEST, i as u64);
            generate_episode(&config.task, config.eval.episode_len, seed)
        })
        .collect()
}

/// Mean absolute prediction error pooled over all steps of all traces.
pub fn mean_test_error(traces: &[EpisodeTrace]) -> f64 {
    let (sum, n) = traces.iter().flat_map(|t| &t.steps).fold((0.0, 0usize), |(s, n), st| (s + st.error, n + 1));
    sum / n.max(1) as f64
}

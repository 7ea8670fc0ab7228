use std::fmt::Write as _;

use sugar::evaluation::{
    boundary_profile, compositional_check, extract_latent_codes, gate_stats, mean_test_error, run_episode, test_episodes,
    BoundaryProfile, EpisodeTrace, GateStats, LatentCodeSummary,
};
use sugar::model::{GatePolicy, SugarModel, SugarVariant};
use sugar::training::ExperimentConfig;
use sugar::Result;

pub const POLICIES: [GatePolicy; 3] = [GatePolicy::Learned, GatePolicy::Closed, GatePolicy::Oracle];

/// One inference pass over the test episodes under a fixed gate policy.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub policy: GatePolicy,
    pub traces: Vec<EpisodeTrace>,
    pub mean_error: f64,
    pub profile: BoundaryProfile,
    pub gates: GateStats,
    pub codes: LatentCodeSummary,
}

impl PolicyRun {
    pub fn new(model: &SugarModel, episodes: &[sugar::task::Episode], policy: GatePolicy) -> Result<Self> {
        let traces = episodes
            .iter()
            .map(|e| run_episode(model, e, policy))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolicyRun {
            policy,
            mean_error: mean_test_error(&traces),
            profile: boundary_profile(&traces)?,
            gates: gate_stats(&traces),
            codes: extract_latent_codes(&traces)?,
            traces,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

/// A trained model run under every gate policy on the same test episodes.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub variant: SugarVariant,
    pub seed: u64,
    pub problems: Vec<u8>,
    /// The policy the model was trained under.
    pub primary: GatePolicy,
    pub runs: Vec<PolicyRun>,
}

pub fn evaluate(config: &ExperimentConfig, model: &SugarModel) -> Result<Evaluation> {
    let episodes = test_episodes(config)?;
    let runs = POLICIES
        .iter()
        .map(|&p| PolicyRun::new(model, &episodes, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        variant: config.variant,
        seed: config.seed,
        problems: config.task.problems.clone(),
        primary: config.train.gate,
        runs,
    })
}

impl Evaluation {
    pub fn run(&self, policy: GatePolicy) -> &PolicyRun {
        self.runs.iter().find(|r| r.policy == policy).expect("every policy is evaluated")
    }

    pub fn primary_run(&self) -> &PolicyRun {
        self.run(self.primary)
    }

    /// Checks that a single run can decide on its own.
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let mut check = |name: String, passed: bool| out.push(Check { name, passed });
        let p = self.primary_run();
        match self.primary {
            GatePolicy::Learned => {
                let (o, l, c) = (
                    self.run(GatePolicy::Oracle).mean_error,
                    p.mean_error,
                    self.run(GatePolicy::Closed).mean_error,
                );
                check(format!("error ordering oracle {o:.6} < learned {l:.6} < closed {c:.6}"), o < l && l < c);
                if self.variant == SugarVariant::A {
                    check(
                        format!("reactive spike ratio {:.3} >= 3.0", p.profile.spike_ratio),
                        p.profile.spike_ratio >= 3.0,
                    );
                } else {
                    check(
                        format!(
                            "anticipation hit rate {:.3} >= 0.9 over {} switches (need >= 100)",
                            p.gates.hit_rate, p.gates.switches
                        ),
                        p.gates.hit_rate >= 0.9 && p.gates.switches >= 100,
                    );
                    check(
                        format!("spike ratio {:.3} <= 1.5", p.profile.spike_ratio),
                        p.profile.spike_ratio <= 1.5,
                    );
                }
                if self.variant == SugarVariant::C {
                    check(
                        format!(
                            "intra-event max error {:.6} <= 3 x intra mean {:.6}",
                            p.profile.intra_max, p.profile.intra_mean
                        ),
                        p.profile.intra_max <= 3.0 * p.profile.intra_mean,
                    );
                    let (d, dist) = (p.codes.max_dispersion(), p.codes.min_pairwise_distance());
                    check(
                        format!("code dispersion {d:.6} < 10% of inter-problem distance {dist:.6}"),
                        d < 0.1 * dist,
                    );
                }
            }
            GatePolicy::Oracle => check(
                format!("oracle spike ratio {:.3} <= 1.5", p.profile.spike_ratio),
                p.profile.spike_ratio <= 1.5,
            ),
            GatePolicy::Closed => {}
        }
        if let (Some(c1), Some(c2), Some(c3)) = (p.codes.code(1), p.codes.code(2), p.codes.code(3)) {
            let c = compositional_check(&c1.mean, &c2.mean, &c3.mean);
            let lambda = c.projection.map_or("undefined".to_string(), |l| format!("{l:.3}"));
            check(
                format!("problem 3 code between 1 and 2, nearer 1 (projection {lambda})"),
                c.passed(),
            );
        }
        out
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let problems: Vec<String> = self.problems.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(
            s,
            "variant {} seed {} problems {} trained with {} gate",
            self.variant,
            self.seed,
            problems.join("+"),
            self.primary
        );
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:<8} error {:.6} spike {:.3} intra mean {:.6} max {:.6} hit rate {:.3} ({}/{}) median interior openings {} dispersion {:.6} distance {:.6}",
                r.policy.to_string(),
                r.mean_error,
                r.profile.spike_ratio,
                r.profile.intra_mean,
                r.profile.intra_max,
                r.gates.hit_rate,
                r.gates.hits,
                r.gates.switches,
                r.gates.median_interior_openings,
                r.codes.max_dispersion(),
                r.codes.min_pairwise_distance(),
            );
        }
        for c in self.checks() {
            let _ = writeln!(s, "{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
        }
        s
    }
}

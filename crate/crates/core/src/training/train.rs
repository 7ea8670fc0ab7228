use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, Checkpoint, ExperimentConfig, SEED_INIT, SEED_TRAIN};
use crate::error::{Error, Result};
use crate::model::{StepInput, StepTrace, SugarModel, SugarState};
use crate::nn::{AdamConfig, AdamState, ParamBlocks};
use crate::task::{generate_episode, Episode};

/// One row of the training metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// Number of windows completed when the row was written.
    pub window_idx: usize,
    /// Mean per-step squared loss over the logged windows.
    pub mean_loss: f64,
    pub gate_open_rate: f64,
    /// Fraction of switches with an opening in the two steps before them.
    pub anticipation_hit_rate: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "window_idx,mean_loss,gate_open_rate,anticipation_hit_rate";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.window_idx, self.mean_loss, self.gate_open_rate, self.anticipation_hit_rate
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

/// What one window of training did.
#[derive(Clone, Debug)]
pub struct WindowReport {
    pub episode_idx: usize,
    /// Forward traces of the window, computed with the pre-update parameters.
    pub traces: Vec<StepTrace>,
    pub loss: f64,
    /// Switches whose anticipation window closed inside this window.
    pub switches: usize,
    pub hits: usize,
}

/// Streams training episodes and applies one ADAM update per window.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: ExperimentConfig,
    config_hash: String,
    model: SugarModel,
    adam: AdamState,
    state: SugarState,
    episode: Option<Episode>,
    episode_idx: usize,
    pos: usize,
    /// Gate status of every row of the current episode seen so far.
    opened: Vec<bool>,
    windows: usize,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_INIT, 0));
        let model = SugarModel::new(config.variant, config.model.clone(), config.task.eb.width(), &mut rng)?;
        let adam = AdamState::new(
            AdamConfig {
                learning_rate: config.train.learning_rate,
                ..AdamConfig::default()
            },
            &model.params,
        );
        let state = model.initial_state();
        Ok(Trainer {
            config_hash: config.hash(),
            config: config.clone(),
            model,
            adam,
            state,
            episode: None,
            episode_idx: 0,
            pos: 0,
            opened: Vec::new(),
            windows: 0,
        })
    }

    pub fn model(&self) -> &SugarModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut SugarModel {
        &mut self.model
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            windows: self.windows,
            episodes: self.episode_idx,
            model: self.model.clone(),
            adam: self.adam.clone(),
            surprise: self.state.surprise.clone(),
        }
    }

    fn diverged(&self, window: usize) -> Error {
        Error::Diverged {
            window,
            checkpoint: Box::new(self.checkpoint()),
        }
    }

    fn next_episode(&mut self) -> Result<()> {
        let len = self.config.train.episode_len;
        let seed = derive_seed(self.config.seed, SEED_TRAIN, self.episode_idx as u64);
        self.episode = Some(generate_episode(&self.config.task, len, seed)?);
        self.episode_idx += 1;
        self.pos = 0;
        self.state = self.model.initial_state();
        self.opened.clear();
        Ok(())
    }

    /// Runs the next window forward, backpropagates through it and updates
    /// the parameters. Starts a fresh episode (and fresh state) whenever the
    /// current one is exhausted.
    pub fn run_window(&mut self) -> Result<WindowReport> {
        let rows = self.config.train.episode_len - 1;
        if self.episode.is_none() || self.pos >= rows {
            self.next_episode()?;
        }
        let episode = self.episode.take().expect("episode loaded above");
        let result = self.window_on(&episode, rows);
        self.episode = Some(episode);
        result
    }

    fn window_on(&mut self, episode: &Episode, rows: usize) -> Result<WindowReport> {
        let window = self.windows;
        let start = self.pos;
        let end = (start + self.config.train.window).min(rows);
        let mut traces = Vec::with_capacity(end - start);
        let mut caches = Vec::with_capacity(end - start);
        for t in start..end {
            let input = StepInput::from_episode(episode, t);
            let mode = self.config.train.gate.mode_at(&episode.switch_times, t);
            let (trace, cache) = match self.model.forward_step(&mut self.state, &input, mode, t) {
                Ok(out) => out,
                Err(Error::NonFinite(_)) => return Err(self.diverged(window)),
                Err(e) => return Err(e),
            };
            self.opened.push(trace.gate_open);
            traces.push(trace);
            caches.push(cache);
        }
        let backward = self.model.bptt_backward(&caches)?;
        if !backward.loss.is_finite() || backward.grads.check_finite().is_err() {
            return Err(self.diverged(window));
        }
        self.adam.step(&mut self.model.params, &backward.grads)?;
        if self.model.params.check_finite().is_err() {
            return Err(self.diverged(window));
        }

        let mut switches = 0;
        let mut hits = 0;
        for &s in &episode.switch_times {
            if s >= 2 && (start..end).contains(&(s - 1)) {
                switches += 1;
                if self.opened[s - 2] || self.opened[s - 1] {
                    hits += 1;
                }
            }
        }

        self.pos = end;
        self.windows += 1;
        Ok(WindowReport {
            episode_idx: self.episode_idx - 1,
            loss: backward.loss,
            traces,
            switches,
            hits,
        })
    }
}

/// Trains a model from scratch as described by `config`.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config)?;
    let mut log = Vec::new();
    let (mut loss, mut steps, mut open, mut switches, mut hits) = (0.0, 0usize, 0usize, 0usize, 0usize);
    for w in 0..config.train.windows {
        let report = trainer.run_window()?;
        loss += report.loss;
        steps += report.traces.len();
        open += report.traces.iter().filter(|t| t.gate_open).count();
        switches += report.switches;
        hits += report.hits;
        if (w + 1) % config.train.log_every == 0 {
            log.push(LogRow {
                window_idx: w + 1,
                mean_loss: loss / steps.max(1) as f64,
                gate_open_rate: open as f64 / steps.max(1) as f64,
                anticipation_hit_rate: if switches == 0 { 0.0 } else { hits as f64 / switches as f64 },
            });
            (loss, steps, open, switches, hits) = (0.0, 0, 0, 0, 0);
        }
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GateMode, SugarVariant};

    fn small(variant: SugarVariant) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.variant = variant;
        c.train.windows = 6;
        c.train.episode_len = 120;
        c.train.log_every = 2;
        c
    }

    #[test]
    fn zero_windows_returns_initial_model() {
        let mut c = small(SugarVariant::B);
        c.train.windows = 0;
        let out = train(&c).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.checkpoint.windows, 0);
        assert_eq!(out.checkpoint.adam.step, 0);
        assert_eq!(out.checkpoint.model, *Trainer::new(&c).unwrap().model());
    }

    #[test]
    fn deterministic() {
        for v in [SugarVariant::A, SugarVariant::B, SugarVariant::C] {
            let c = small(v);
            let a = train(&c).unwrap();
            let b = train(&c).unwrap();
            assert_eq!(a.checkpoint.to_text(), b.checkpoint.to_text());
            assert_eq!(a.log, b.log);
        }
    }

    #[test]
    fn log_cadence_and_ranges() {
        let out = train(&small(SugarVariant::C)).unwrap();
        assert_eq!(out.log.iter().map(|r| r.window_idx).collect::<Vec<_>>(), vec![2, 4, 6]);
        for r in &out.log {
            assert!(r.mean_loss.is_finite() && r.mean_loss >= 0.0);
            assert!((0.0..=1.0).contains(&r.gate_open_rate));
            assert!((0.0..=1.0).contains(&r.anticipation_hit_rate));
        }
    }

    #[test]
    fn windows_cover_episode_then_roll_over() {
        let c = small(SugarVariant::B);
        let mut tr = Trainer::new(&c).unwrap();
        let mut covered = Vec::new();
        for _ in 0..4 {
            let r = tr.run_window().unwrap();
            covered.push((r.episode_idx, r.traces.first().unwrap().t, r.traces.last().unwrap().t));
        }
        assert_eq!(covered, vec![(0, 0, 49), (0, 50, 99), (0, 100, 118), (1, 0, 49)]);
    }

    #[test]
    fn zero_learning_rate_matches_pure_inference() {
        let mut c = small(SugarVariant::C);
        c.train.learning_rate = 0.0;
        let mut tr = Trainer::new(&c).unwrap();
        let model = tr.model().clone();
        let mut traces = Vec::new();
        for _ in 0..3 {
            traces.extend(tr.run_window().unwrap().traces);
        }
        assert_eq!(*tr.model(), model);

        let ep = generate_episode(&c.task, c.train.episode_len, derive_seed(c.seed, SEED_TRAIN, 0)).unwrap();
        let mut state = model.initial_state();
        for (t, expected) in traces.iter().enumerate() {
            let (trace, _) = model
                .forward_step(&mut state, &StepInput::from_episode(&ep, t), GateMode::Learned, t)
                .unwrap();
            assert_eq!(&trace, expected);
        }
    }

    #[test]
    fn divergence_is_reported_with_checkpoint() {
        let mut c = small(SugarVariant::B);
        c.train.learning_rate = 1e300;
        match train(&c) {
            Err(Error::Diverged { window, checkpoint }) => {
                assert!(window < c.train.windows);
                assert_eq!(checkpoint.windows, window);
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
        }
    }
}

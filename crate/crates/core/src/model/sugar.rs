use rand::Rng;

use super::switching::{is_open, mean_abs_error, SwitchingLayer};
use super::{cfr_gate_gradient, ModelConfig, SugarVariant, SurpriseEstimator};
use crate::error::{Error, Result};
use crate::nn::{check_len, Dense, LstmCache, LstmCell, ParamBlocks};
use crate::task::{Episode, Symbol, ALPHABET, PROBLEMS};

/// Event boundary LSTM and its scalar read-out `x_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryModule {
    pub lstm: LstmCell,
    pub readout: Dense,
}

/// Every trained weight of the model. Also used, zeroed, as the gradient
/// accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct SugarParams {
    /// Event processing: `[symbol one-hot, x_o]` → hidden.
    pub processing: LstmCell,
    /// Processing hidden → symbol prediction.
    pub readout: Dense,
    /// Event anticipation: CI → `x_a`.
    pub anticipation: LstmCell,
    pub switching: SwitchingLayer,
    /// Present for variants B and C.
    pub boundary: Option<BoundaryModule>,
}

impl SugarParams {
    pub fn zeros_like(&self) -> Self {
        SugarParams {
            processing: self.processing.zeros_like(),
            readout: self.readout.zeros_like(),
            anticipation: self.anticipation.zeros_like(),
            switching: self.switching.zeros_like(),
            boundary: self.boundary.as_ref().map(|b| BoundaryModule {
                lstm: b.lstm.zeros_like(),
                readout: b.readout.zeros_like(),
            }),
        }
    }
}

fn prefixed<'a, T>(prefix: &str, blocks: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> + 'a
where
    T: 'a,
{
    let prefix = prefix.to_string();
    blocks.into_iter().map(move |(n, b)| (format!("{prefix}.{n}"), b))
}

impl ParamBlocks for SugarParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<_> = prefixed("processing", self.processing.blocks())
            .chain(prefixed("readout", self.readout.blocks()))
            .chain(prefixed("anticipation", self.anticipation.blocks()))
            .chain(prefixed("switching", self.switching.blocks()))
            .collect();
        if let Some(b) = &self.boundary {
            out.extend(prefixed("boundary", b.lstm.blocks()));
            out.extend(prefixed("boundary_readout", b.readout.blocks()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<_> = prefixed("processing", self.processing.blocks_mut())
            .chain(prefixed("readout", self.readout.blocks_mut()))
            .chain(prefixed("anticipation", self.anticipation.blocks_mut()))
            .chain(prefixed("switching", self.switching.blocks_mut()))
            .collect();
        if let Some(b) = &mut self.boundary {
            out.extend(prefixed("boundary", b.lstm.blocks_mut()));
            out.extend(prefixed("boundary_readout", b.readout.blocks_mut()));
        }
        out
    }
}

/// Recurrent state carried from step to step.
#[derive(Clone, Debug, PartialEq)]
pub struct SugarState {
    pub h_p: Vec<f64>,
    pub c_p: Vec<f64>,
    pub h_a: Vec<f64>,
    pub c_a: Vec<f64>,
    pub h_b: Vec<f64>,
    pub c_b: Vec<f64>,
    /// Switching-layer hidden state.
    pub x_h: Vec<f64>,
    pub surprise: SurpriseEstimator,
    /// Variant A: surprise of the last prediction, used by the next step.
    pub pending_surprise: f64,
}

impl SugarState {
    pub fn new(model: &SugarModel) -> Self {
        let c = &model.config;
        SugarState {
            h_p: vec![0.0; c.processing_hidden],
            c_p: vec![0.0; c.processing_hidden],
            h_a: vec![0.0; c.anticipation_hidden],
            c_a: vec![0.0; c.anticipation_hidden],
            h_b: vec![0.0; c.boundary_hidden],
            c_b: vec![0.0; c.boundary_hidden],
            x_h: vec![0.0; c.switching_hidden],
            surprise: SurpriseEstimator::new(c.surprise),
            pending_surprise: 0.0,
        }
    }
}

/// How the update gate is driven on a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    /// The variant's own mechanism.
    Learned,
    /// Gate drive `x_s` pinned to the given value.
    Forced(f64),
    /// `x_ζ = 1` exactly.
    Closed,
}

#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    /// Symbol observed at this step.
    pub symbol: Symbol,
    pub ci: &'a [f64],
    pub eb: &'a [f64],
    /// Symbol to be predicted (the next one in the stream).
    pub target: Symbol,
}

impl<'a> StepInput<'a> {
    /// Row `t` of an episode: consumes `symbols[t]`, predicts `symbols[t + 1]`.
    pub fn from_episode(episode: &'a Episode, t: usize) -> Self {
        StepInput {
            symbol: episode.symbols[t],
            ci: episode.ci.row(t),
            eb: episode.eb.row(t),
            target: episode.symbols[t + 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub t: usize,
    pub symbol: Symbol,
    pub target: Symbol,
    pub y_act: Vec<f64>,
    /// Prediction with the gate held closed; only computed when the gate was open.
    pub y_cf: Option<Vec<f64>>,
    pub x_zeta: f64,
    pub gate_open: bool,
    pub x_o: Vec<f64>,
    /// Mean absolute difference between `y_act` and the target one-hot.
    pub error: f64,
    /// Gate drive `x_s` used on this step.
    pub surprise: f64,
}

impl StepTrace {
    pub fn y_cf_error(&self) -> Option<f64> {
        self.y_cf
            .as_ref()
            .map(|y| mean_abs_error(y, &self.target.one_hot()))
    }
}

/// Forward intermediates for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub symbol: Symbol,
    pub target: Symbol,
    pub anticipation: LstmCache,
    pub boundary: Option<(LstmCache, Vec<f64>)>,
    pub x_a: Vec<f64>,
    pub x_s: f64,
    /// Whether `x_s` came from the boundary module (and so takes gradient).
    pub gate_learned: bool,
    pub x_zeta: f64,
    pub x_h_prev: Vec<f64>,
    pub x_eta: Vec<f64>,
    pub x_h: Vec<f64>,
    pub x_o: Vec<f64>,
    pub processing: LstmCache,
    pub h_p: Vec<f64>,
    pub y: Vec<f64>,
    pub gate_open: bool,
    pub y_cf: Option<Vec<f64>>,
}

/// Result of a BPTT pass over one window.
#[derive(Clone, Debug)]
pub struct Backward {
    pub grads: SugarParams,
    /// Sum of squared prediction errors over the window.
    pub loss: f64,
    /// Per step: reconstruction-loss gradient at the gate opening `1 − x_ζ`.
    pub delta_zeta: Vec<f64>,
    /// Per step: the opening gradient actually sent back through the gate.
    pub delta_zeta_reg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SugarModel {
    pub variant: SugarVariant,
    pub config: ModelConfig,
    pub eb_width: usize,
    pub params: SugarParams,
}

impl ParamBlocks for SugarModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        self.params.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.params.blocks_mut()
    }
}

fn processing_input(symbol: Symbol, x_o: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(ALPHABET + x_o.len());
    v.extend_from_slice(&symbol.one_hot());
    v.extend_from_slice(x_o);
    v
}

impl SugarModel {
    pub fn new<R: Rng + ?Sized>(
        variant: SugarVariant,
        config: ModelConfig,
        eb_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if variant.has_boundary_module() && eb_width == 0 {
            return Err(Error::InvalidConfig("boundary module needs at least one EB channel".into()));
        }
        let c = &config;
        let processing = LstmCell::new(ALPHABET + c.switching_hidden, c.processing_hidden, rng);
        let readout = Dense::new(c.processing_hidden, ALPHABET, true, rng);
        let anticipation = LstmCell::new(PROBLEMS, c.anticipation_hidden, rng);
        let switching = SwitchingLayer::new(c.anticipation_hidden, c.switching_hidden, rng);
        let boundary = variant.has_boundary_module().then(|| BoundaryModule {
            lstm: LstmCell::new(eb_width, c.boundary_hidden, rng),
            readout: Dense::new(c.boundary_hidden, 1, true, rng),
        });
        Ok(SugarModel {
            variant,
            config,
            eb_width,
            params: SugarParams {
                processing,
                readout,
                anticipation,
                switching,
                boundary,
            },
        })
    }

    /// Checks that `params` has the layout this model expects.
    pub fn check_params(&self, params: &SugarParams) -> Result<()> {
        let want = self.params.blocks();
        let got = params.blocks();
        if want.len() != got.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter blocks, got {}",
                want.len(),
                got.len()
            )));
        }
        for ((wn, wb), (gn, gb)) in want.iter().zip(&got) {
            if wn != gn || wb.len() != gb.len() {
                return Err(Error::Shape(format!(
                    "parameter {gn} has {} values, expected {wn} with {}",
                    gb.len(),
                    wb.len()
                )));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SugarState {
        SugarState::new(self)
    }

    /// One step of the full model. Advances `state`.
    pub fn forward_step(
        &self,
        state: &mut SugarState,
        input: &StepInput<'_>,
        mode: GateMode,
        t: usize,
    ) -> Result<(StepTrace, StepCache)> {
        check_len("CI input", input.ci.len(), PROBLEMS)?;
        check_len("EB input", input.eb.len(), self.eb_width)?;
        let p = &self.params;

        let (h_a, c_a, anticipation) = p.anticipation.forward(input.ci, &state.h_a, &state.c_a)?;
        let x_a = h_a.clone();

        let mut boundary = None;
        let mut learned_xs = None;
        let mut next_b = None;
        if let Some(b) = &p.boundary {
            let (h_b, c_b, cache) = b.lstm.forward(input.eb, &state.h_b, &state.c_b)?;
            learned_xs = Some(b.readout.forward(&h_b)?[0]);
            boundary = Some((cache, h_b.clone()));
            next_b = Some((h_b, c_b));
        }

        let (x_s, gate_learned) = match mode {
            GateMode::Learned => match learned_xs {
                Some(v) => (v, true),
                None => (state.pending_surprise, false),
            },
            GateMode::Forced(v) => (v, false),
            GateMode::Closed => (0.0, false),
        };
        let switched = match mode {
            GateMode::Closed => p.switching.forward_with_gate(1.0, &x_a, &state.x_h)?,
            _ => p.switching.forward(&self.config.gate, &x_a, x_s, &state.x_h)?,
        };

        let proc_in = processing_input(input.symbol, &switched.x_o);
        let (h_p, c_p, processing) = p.processing.forward(&proc_in, &state.h_p, &state.c_p)?;
        let y = p.readout.forward(&h_p)?;
        let target = input.target.one_hot();
        let error = mean_abs_error(&y, &target);
        if !error.is_finite() {
            return Err(Error::NonFinite(format!("prediction at step {t}")));
        }

        let gate_open = is_open(switched.x_zeta);
        let mut cache = StepCache {
            symbol: input.symbol,
            target: input.target,
            anticipation,
            boundary,
            x_a,
            x_s,
            gate_learned,
            x_zeta: switched.x_zeta,
            x_h_prev: state.x_h.clone(),
            x_eta: switched.x_eta,
            x_h: switched.x_h.clone(),
            x_o: switched.x_o.clone(),
            processing,
            h_p: h_p.clone(),
            y: y.clone(),
            gate_open,
            y_cf: None,
        };
        if gate_open {
            cache.y_cf = Some(self.counterfactual_forward(&cache)?);
        }

        let trace = StepTrace {
            t,
            symbol: input.symbol,
            target: input.target,
            y_act: y.clone(),
            y_cf: cache.y_cf.clone(),
            x_zeta: switched.x_zeta,
            gate_open,
            x_o: switched.x_o,
            error,
            surprise: x_s,
        };

        state.h_a = h_a;
        state.c_a = c_a;
        if let Some((h_b, c_b)) = next_b {
            state.h_b = h_b;
            state.c_b = c_b;
        }
        state.x_h = switched.x_h;
        state.h_p = h_p;
        state.c_p = c_p;
        if self.variant == SugarVariant::A {
            state.pending_surprise = state.surprise.update(&y, &target);
        }
        Ok((trace, cache))
    }

    /// Prediction the model would have made on the cached step had the gate
    /// stayed fully closed: the latent code is rebuilt from the previous
    /// switching state and the processing cell is re-run from its pre-step
    /// state. Touches no live state.
    pub fn counterfactual_forward(&self, cache: &StepCache) -> Result<Vec<f64>> {
        if !cache.gate_open {
            return Err(Error::InvalidInput(
                "counterfactual prediction is only defined for open-gate steps".into(),
            ));
        }
        let p = &self.params;
        let x_o_cf = p.switching.w_o.matvec(&cache.x_h_prev);
        let proc_in = processing_input(cache.symbol, &x_o_cf);
        let (h_cf, _, _) = p
            .processing
            .forward(&proc_in, &cache.processing.h_prev, &cache.processing.c_prev)?;
        p.readout.forward(&h_cf)
    }

    /// Runs `inputs` from `state` (left untouched) and returns the summed
    /// squared reconstruction loss.
    pub fn replay_loss(&self, state: &SugarState, inputs: &[StepInput<'_>]) -> Result<f64> {
        let mut s = state.clone();
        let mut loss = 0.0;
        for (t, input) in inputs.iter().enumerate() {
            let (_, cache) = self.forward_step(&mut s, input, GateMode::Learned, t)?;
            let target = cache.target.one_hot();
            loss += cache.y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(loss)
    }

    /// BPTT over a window of cached steps, with counterfactual regularization
    /// when the variant uses it.
    pub fn bptt_backward(&self, caches: &[StepCache]) -> Result<Backward> {
        self.bptt_backward_with(caches, self.variant.uses_cfr())
    }

    /// BPTT of `Σ_t ||y_t − ŷ_t||²` over `caches`. Gradients entering the
    /// window from the future are taken as zero. With `cfr`, the gate-drive
    /// gradient on open-gate steps is replaced by [`cfr_gate_gradient`].
    pub fn bptt_backward_with(&self, caches: &[StepCache], cfr: bool) -> Result<Backward> {
        let p = &self.params;
        let c = &self.config;
        let mut grads = p.zeros_like();
        let mut loss = 0.0;
        let mut delta_zeta = vec![0.0; caches.len()];
        let mut delta_zeta_reg = vec![0.0; caches.len()];

        let mut dh_p = vec![0.0; c.processing_hidden];
        let mut dc_p = vec![0.0; c.processing_hidden];
        let mut dh_a = vec![0.0; c.anticipation_hidden];
        let mut dc_a = vec![0.0; c.anticipation_hidden];
        let mut dh_b = vec![0.0; c.boundary_hidden];
        let mut dc_b = vec![0.0; c.boundary_hidden];
        let mut dx_h_next = vec![0.0; c.switching_hidden];

        for (t, cache) in caches.iter().enumerate().rev() {
            let target = cache.target.one_hot();
            let dy: Vec<f64> = cache.y.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            loss += cache.y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();

            let mut dh = p.readout.backward(&cache.h_p, &dy, &mut grads.readout)?;
            for (d, carry) in dh.iter_mut().zip(&dh_p) {
                *d += carry;
            }
            let (d_in, dh_prev, dc_prev) = p.processing.backward(&cache.processing, &dh, &dc_p, &mut grads.processing)?;
            dh_p = dh_prev;
            dc_p = dc_prev;
            let dx_o = &d_in[ALPHABET..];

            // latent code read-out
            let sw = &p.switching;
            grads.switching.w_o.add_outer(dx_o, &cache.x_h);
            let mut dx_h = sw.w_o.matvec_t(dx_o);
            for (d, carry) in dx_h.iter_mut().zip(&dx_h_next) {
                *d += carry;
            }

            // gated fusion
            let z = cache.x_zeta;
            let dz: f64 = dx_h
                .iter()
                .zip(cache.x_h_prev.iter().zip(&cache.x_eta))
                .map(|(d, (prev, eta))| d * (prev - eta))
                .sum();
            let dx_eta: Vec<f64> = dx_h.iter().map(|d| (1.0 - z) * d).collect();
            let mut dx_h_prev: Vec<f64> = dx_h.iter().map(|d| z * d).collect();
            sw.w_eta.matvec_t_acc(&dx_eta, &mut dx_h_prev);
            grads.switching.w_eta.add_outer(&dx_eta, &cache.x_h_prev);
            grads.switching.w_a.add_outer(&dx_eta, &cache.x_a);
            let dx_a = sw.w_a.matvec_t(&dx_eta);
            dx_h_next = dx_h_prev;

            // gate opening 1 - x_zeta, then the drive x_s
            let delta = -dz;
            let delta_reg = if cfr && cache.gate_open {
                let y_cf = cache.y_cf.as_ref().ok_or_else(|| {
                    Error::InvalidInput(format!("open-gate step {t} has no counterfactual prediction"))
                })?;
                cfr_gate_gradient(delta, 1.0, &cache.y, y_cf, &target)
            } else {
                delta
            };
            delta_zeta[t] = delta;
            delta_zeta_reg[t] = delta_reg;

            if let (Some(b), Some(gb), Some((b_cache, h_b))) = (&p.boundary, &mut grads.boundary, &cache.boundary) {
                let d_xs = if cache.gate_learned { -delta_reg * c.gate.dzeta_dxs(z) } else { 0.0 };
                let mut dh = b.readout.backward(h_b, &[d_xs], &mut gb.readout)?;
                for (d, carry) in dh.iter_mut().zip(&dh_b) {
                    *d += carry;
                }
                let (_, dh_prev, dc_prev) = b.lstm.backward(b_cache, &dh, &dc_b, &mut gb.lstm)?;
                dh_b = dh_prev;
                dc_b = dc_prev;
            }

            let mut dh = dx_a;
            for (d, carry) in dh.iter_mut().zip(&dh_a) {
                *d += carry;
            }
            let (_, dh_prev, dc_prev) = p
                .anticipation
                .backward(&cache.anticipation, &dh, &dc_a, &mut grads.anticipation)?;
            dh_a = dh_prev;
            dc_a = dc_prev;
        }

        Ok(Backward {
            grads,
            loss,
            delta_zeta,
            delta_zeta_reg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GateShape;
    use crate::nn::grad_check;
    use crate::task::{generate_episode, EbVariant, Episode, TaskConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(variant: SugarVariant, seed: u64) -> SugarModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SugarModel::new(variant, ModelConfig::default(), 4, &mut rng).unwrap()
    }

    fn episode(seed: u64, len: usize) -> Episode {
        generate_episode(&TaskConfig::default(), len, seed).unwrap()
    }

    fn inputs(ep: &Episode) -> Vec<StepInput<'_>> {
        (0..ep.len() - 1)
            .map(|t| StepInput {
                symbol: ep.symbols[t],
                ci: ep.ci.row(t),
                eb: ep.eb.row(t),
                target: ep.symbols[t + 1],
            })
            .collect()
    }

    /// Random (not freshly initialized) recurrent state.
    fn random_state(m: &SugarModel, rng: &mut ChaCha8Rng) -> SugarState {
        let mut s = m.initial_state();
        for v in [&mut s.h_p, &mut s.c_p, &mut s.h_a, &mut s.c_a, &mut s.h_b, &mut s.c_b, &mut s.x_h] {
            for x in v.iter_mut() {
                *x = rng.gen_range(-0.8..0.8);
            }
        }
        s
    }

    fn run(m: &SugarModel, state: &mut SugarState, inputs: &[StepInput<'_>]) -> Vec<StepCache> {
        inputs
            .iter()
            .enumerate()
            .map(|(t, i)| m.forward_step(state, i, GateMode::Learned, t).unwrap().1)
            .collect()
    }

    #[test]
    fn fresh_model_is_well_defined() {
        for variant in [SugarVariant::A, SugarVariant::B, SugarVariant::C] {
            let m = model(variant, 1);
            let mut s = m.initial_state();
            let input = StepInput {
                symbol: Symbol::A,
                ci: &[0.0; 3],
                eb: &[0.0; 4],
                target: Symbol::B,
            };
            let (trace, _) = m.forward_step(&mut s, &input, GateMode::Learned, 0).unwrap();
            assert!(trace.x_o.iter().all(|v| v.is_finite()));
            assert!(trace.y_act.iter().all(|v| v.is_finite()));
            assert!(trace.x_zeta > 0.0 && trace.x_zeta < 1.0);
            assert_eq!(trace.gate_open, trace.y_cf.is_some());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model(SugarVariant::B, 1);
        let mut s = m.initial_state();
        let bad_eb = StepInput {
            symbol: Symbol::A,
            ci: &[0.0; 3],
            eb: &[0.0; 2],
            target: Symbol::B,
        };
        assert!(m.forward_step(&mut s, &bad_eb, GateMode::Learned, 0).is_err());
        let bad_ci = StepInput {
            ci: &[0.0; 2],
            eb: &[0.0; 4],
            ..bad_eb
        };
        assert!(m.forward_step(&mut s, &bad_ci, GateMode::Learned, 0).is_err());
    }

    #[test]
    fn forced_schedule_opens_only_where_forced() {
        let m = model(SugarVariant::B, 2);
        let ep = episode(3, 200);
        let mut s = m.initial_state();
        let ins = inputs(&ep);
        for (t, input) in ins.iter().enumerate() {
            let pre_switch = ep.switch_flag.get(t + 1).copied().unwrap_or(false);
            let mode = GateMode::Forced(if pre_switch { 1.0 } else { 0.0 });
            let (trace, _) = m.forward_step(&mut s, input, mode, t).unwrap();
            assert_eq!(trace.gate_open, pre_switch, "t={t}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = model(SugarVariant::C, 4);
        let ep = episode(5, 120);
        let ins = inputs(&ep);
        let go = || {
            let mut s = m.initial_state();
            ins.iter()
                .enumerate()
                .map(|(t, i)| m.forward_step(&mut s, i, GateMode::Learned, t).unwrap().0)
                .collect::<Vec<_>>()
        };
        assert_eq!(go(), go());
    }

    /// A model whose boundary bias keeps the gate wide open.
    fn open_model(variant: SugarVariant, seed: u64) -> SugarModel {
        let mut m = model(variant, seed);
        m.params.boundary.as_mut().unwrap().readout.bias.as_mut().unwrap()[0] = 2.0;
        m
    }

    #[test]
    fn counterfactual_matches_closed_gate_replay() {
        let m = open_model(SugarVariant::C, 6);
        let ep = episode(7, 40);
        let ins = inputs(&ep);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = random_state(&m, &mut rng);
        for (t, input) in ins.iter().enumerate() {
            let before = s.clone();
            let (trace, cache) = m.forward_step(&mut s, input, GateMode::Learned, t).unwrap();
            assert!(trace.gate_open);
            // independent replay: same pre-step state, gate forced shut
            let mut replay = before.clone();
            let (closed, _) = m.forward_step(&mut replay, input, GateMode::Closed, t).unwrap();
            assert_eq!(trace.y_cf.as_ref().unwrap(), &closed.y_act);

            // purity
            let after = s.clone();
            m.counterfactual_forward(&cache).unwrap();
            assert_eq!(s, after);
        }
    }

    #[test]
    fn counterfactual_equals_actual_when_update_changes_nothing() {
        let mut m = open_model(SugarVariant::C, 9);
        // x_eta = x_h_prev whenever w_a = 0 and w_eta = I
        m.params.switching.w_a = crate::nn::Matrix::zeros(4, 8);
        m.params.switching.w_eta = crate::nn::Matrix::identity(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(&m, &mut rng);
        let input = StepInput {
            symbol: Symbol::B,
            ci: &[0.0, 1.0, 0.0],
            eb: &[1.0, 0.0, 1.0, 0.0],
            target: Symbol::C,
        };
        let (trace, _) = m.forward_step(&mut s, &input, GateMode::Learned, 0).unwrap();
        assert!(trace.gate_open);
        assert_eq!(trace.y_cf.unwrap(), trace.y_act);
    }

    #[test]
    fn counterfactual_rejected_on_closed_gate() {
        let m = model(SugarVariant::C, 10);
        let mut s = m.initial_state();
        let input = StepInput {
            symbol: Symbol::A,
            ci: &[0.0; 3],
            eb: &[0.0; 4],
            target: Symbol::B,
        };
        let (_, cache) = m.forward_step(&mut s, &input, GateMode::Closed, 0).unwrap();
        assert!(!cache.gate_open);
        assert!(m.counterfactual_forward(&cache).is_err());
    }

    #[test]
    fn closed_gate_keeps_code_static() {
        let m = model(SugarVariant::B, 11);
        let ep = episode(12, 100);
        let mut s = m.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        s.x_h = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let start = s.x_h.clone();
        let mut codes = Vec::new();
        for (t, input) in inputs(&ep).iter().enumerate() {
            codes.push(m.forward_step(&mut s, input, GateMode::Closed, t).unwrap().0.x_o);
        }
        assert!(codes.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(s.x_h, start);
    }

    #[test]
    fn empty_window_has_zero_gradient() {
        let m = model(SugarVariant::C, 13);
        let back = m.bptt_backward(&[]).unwrap();
        assert_eq!(back.loss, 0.0);
        assert!(back.grads.blocks().iter().all(|(_, b)| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn variant_c_equals_b_when_no_gate_opens() {
        let mut mb = model(SugarVariant::B, 14);
        mb.params.boundary.as_mut().unwrap().readout.bias.as_mut().unwrap()[0] = -3.0;
        let mut mc = mb.clone();
        mc.variant = SugarVariant::C;
        let ep = episode(15, 60);
        let ins = inputs(&ep);
        let cb = run(&mb, &mut mb.initial_state(), &ins);
        let cc = run(&mc, &mut mc.initial_state(), &ins);
        assert!(cc.iter().all(|c| !c.gate_open));
        let gb = mb.bptt_backward(&cb).unwrap();
        let gc = mc.bptt_backward(&cc).unwrap();
        assert_eq!(gb.grads, gc.grads);
        assert_eq!(gc.delta_zeta, gc.delta_zeta_reg);
    }

    #[test]
    fn harmful_openings_are_pushed_shut() {
        let mut m = model(SugarVariant::C, 21);
        let ep = episode(22, 40);
        let s0 = random_state(&m, &mut ChaCha8Rng::seed_from_u64(4));
        let caches = run(&m, &mut s0.clone(), &inputs(&ep));
        let mean_xs = caches.iter().map(|c| c.x_s).sum::<f64>() / caches.len() as f64;
        m.params.boundary.as_mut().unwrap().readout.bias.as_mut().unwrap()[0] += 0.5 - mean_xs;
        let caches = run(&m, &mut s0.clone(), &inputs(&ep));
        let bias = |b: &Backward| b.grads.boundary.as_ref().unwrap().readout.bias.as_ref().unwrap()[0];
        let mut checked = 0;
        for cache in caches.iter().filter(|c| c.gate_open) {
            let target = cache.target.one_hot();
            let r = mean_abs_error(&cache.y, &target) - mean_abs_error(cache.y_cf.as_ref().unwrap(), &target);
            let one = std::slice::from_ref(cache);
            let shift = bias(&m.bptt_backward_with(one, true).unwrap()) - bias(&m.bptt_backward_with(one, false).unwrap());
            // descent lowers x_s (closes the gate) exactly when the opening hurt
            assert_eq!(shift > 0.0, r > 0.0, "r {r} shift {shift}");
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn cfr_replaces_gate_gradient_on_open_steps() {
        let mut m = model(SugarVariant::C, 16);
        let ep = episode(17, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0 = random_state(&m, &mut rng);
        // centre the learned drive on the open/closed threshold
        let caches = run(&m, &mut s0.clone(), &inputs(&ep));
        let mean_xs = caches.iter().map(|c| c.x_s).sum::<f64>() / caches.len() as f64;
        m.params.boundary.as_mut().unwrap().readout.bias.as_mut().unwrap()[0] += 0.5 - mean_xs;
        let caches = run(&m, &mut s0.clone(), &inputs(&ep));
        let opened = caches.iter().filter(|c| c.gate_open).count();
        assert!(opened > 0 && opened < caches.len(), "{opened}");
        let back = m.bptt_backward(&caches).unwrap();
        for (t, c) in caches.iter().enumerate() {
            let expected = if c.gate_open {
                cfr_gate_gradient(back.delta_zeta[t], 1.0, &c.y, c.y_cf.as_ref().unwrap(), &c.target.one_hot())
            } else {
                back.delta_zeta[t]
            };
            assert_eq!(back.delta_zeta_reg[t], expected);
        }
        // the reconstruction part of δ_ζ does not depend on the regularizer
        let plain = m.bptt_backward_with(&caches, false).unwrap();
        assert_eq!(plain.delta_zeta, back.delta_zeta);
        assert_ne!(plain.grads.boundary, back.grads.boundary);
        assert_eq!(plain.grads.processing, back.grads.processing);
    }

    fn full_gradcheck(variant: SugarVariant, seed: u64, bias: f64) {
        let mut m = model(variant, seed);
        m.params.boundary.as_mut().unwrap().readout.bias.as_mut().unwrap()[0] = bias;
        let ep = episode(seed + 100, 21);
        let ins = inputs(&ep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
        let s0 = random_state(&m, &mut rng);
        let caches = run(&m, &mut s0.clone(), &ins);
        let back = m.bptt_backward_with(&caches, false).unwrap();
        assert!((back.loss - m.replay_loss(&s0, &ins).unwrap()).abs() < 1e-12);
        let report = grad_check(&m, &back.grads_model(&m), |p| p.replay_loss(&s0, &ins).unwrap(), 1e-5, 1e-4);
        assert!(report.passed, "variant {variant} seed {seed}:\n{report}");
    }

    impl Backward {
        fn grads_model(&self, m: &SugarModel) -> SugarModel {
            SugarModel {
                params: self.grads.clone(),
                ..m.clone()
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..3 {
            full_gradcheck(SugarVariant::B, seed, 0.4);
            full_gradcheck(SugarVariant::C, seed, 0.6);
        }
    }

    #[test]
    fn variant_a_ignores_gate_gradient_path() {
        let m = model(SugarVariant::A, 18);
        assert!(m.params.boundary.is_none());
        let ep = episode(19, 50);
        let caches = run(&m, &mut m.initial_state(), &inputs(&ep));
        assert!(caches.iter().all(|c| !c.gate_learned));
        m.bptt_backward(&caches).unwrap();
    }

    #[test]
    fn gate_shape_is_configurable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = ModelConfig {
            gate: GateShape {
                theta0: 2.0,
                theta1: 4.0,
            },
            ..ModelConfig::default()
        };
        let m = SugarModel::new(SugarVariant::B, config, 1, &mut rng).unwrap();
        let mut s = m.initial_state();
        let input = StepInput {
            symbol: Symbol::A,
            ci: &[0.0; 3],
            eb: &[0.0],
            target: Symbol::B,
        };
        let (trace, _) = m.forward_step(&mut s, &input, GateMode::Forced(0.5), 0).unwrap();
        assert!((trace.x_zeta - 0.5).abs() < 1e-15);
        assert!(!trace.gate_open);
        assert!(SugarModel::new(SugarVariant::B, ModelConfig::default(), 0, &mut rng).is_err());
        let _ = EbVariant::default();
    }
}

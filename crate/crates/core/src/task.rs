//! Hierarchical sequence task: symbol streams generated by switching between
//! hidden cyclic problem graphs, plus the two auxiliary input channels
//! (contextual information, CI, and event-boundary information, EB).

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Number of distinct symbols (A, B, C).
pub const ALPHABET: usize = 3;
/// Number of distinct problems; also the CI width.
pub const PROBLEMS: usize = 3;
pub const MIN_INTERVAL: usize = 10;
pub const MAX_INTERVAL: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(u8);

impl Symbol {
    pub const A: Symbol = Symbol(0);
    pub const B: Symbol = Symbol(1);
    pub const C: Symbol = Symbol(2);

    pub fn new(id: usize) -> Result<Self> {
        if id >= ALPHABET {
            return Err(Error::InvalidInput(format!("symbol id {id} out of range")));
        }
        Ok(Symbol(id as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn one_hot(self) -> [f64; ALPHABET] {
        let mut v = [0.0; ALPHABET];
        v[self.index()] = 1.0;
        v
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One hidden problem: a fixed cycle of symbols entered at `start_index`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemGraph {
    pub problem_id: u8,
    pub cycle: Vec<Symbol>,
    pub start_index: usize,
}

impl ProblemGraph {
    fn cycle_for(problem_id: u8) -> Result<Vec<Symbol>> {
        use Symbol as S;
        match problem_id {
            1 => Ok(vec![S::A, S::B]),
            2 => Ok(vec![S::B, S::C]),
            3 => Ok(vec![S::A, S::B, S::C, S::B]),
            _ => Err(Error::InvalidInput(format!("unknown problem id {problem_id}"))),
        }
    }

    pub fn with_start(problem_id: u8, start_index: usize) -> Result<Self> {
        let cycle = Self::cycle_for(problem_id)?;
        if start_index >= cycle.len() {
            return Err(Error::InvalidInput(format!(
                "start index {start_index} outside the {}-cycle of problem {problem_id}",
                cycle.len()
            )));
        }
        Ok(ProblemGraph {
            problem_id,
            cycle,
            start_index,
        })
    }

    /// The `k`-th symbol emitted after entering the problem.
    pub fn symbol_at(&self, k: usize) -> Symbol {
        self.cycle[(self.start_index + k) % self.cycle.len()]
    }

    pub fn start_symbol(&self) -> Symbol {
        self.symbol_at(0)
    }
}

/// Problem graph with the default entry point (first symbol of the cycle).
pub fn build_problem_graph(problem_id: u8) -> Result<ProblemGraph> {
    ProblemGraph::with_start(problem_id, 0)
}

/// Event-boundary channel layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EbVariant {
    /// Channel 0 fires one step before each switch; the remaining channels
    /// are independent fair coin flips.
    Distractor { distractors: usize },
    /// `channels` linear ramps, staggered inside the last `ramp_len` steps
    /// before a switch, all reaching 1.0 on the step before it.
    Ramp { channels: usize, ramp_len: usize },
}

impl Default for EbVariant {
    fn default() -> Self {
        EbVariant::Distractor { distractors: 3 }
    }
}

impl EbVariant {
    pub fn width(&self) -> usize {
        match *self {
            EbVariant::Distractor { distractors } => 1 + distractors,
            EbVariant::Ramp { channels, .. } => channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EbVariant::Distractor { .. } => Ok(()),
            EbVariant::Ramp { channels, ramp_len } => {
                if channels == 0 {
                    return Err(Error::InvalidConfig("ramp EB needs at least one channel".into()));
                }
                if ramp_len == 0 || ramp_len >= MIN_INTERVAL {
                    return Err(Error::InvalidConfig(format!(
                        "ramp length {ramp_len} must lie in 1..{MIN_INTERVAL}"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Problem ids taking part, e.g. `[1, 2]` or `[1, 2, 3]`.
    pub problems: Vec<u8>,
    /// Entry index into the cycle of problems 1, 2, 3.
    pub start_index: [usize; PROBLEMS],
    pub eb: EbVariant,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            problems: vec![1, 2],
            start_index: [0, 0, 0],
            eb: EbVariant::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; PROBLEMS];
        for &p in &self.problems {
            if !(1..=PROBLEMS as u8).contains(&p) {
                return Err(Error::InvalidConfig(format!("unknown problem id {p}")));
            }
            if std::mem::replace(&mut seen[p as usize - 1], true) {
                return Err(Error::InvalidConfig(format!("problem {p} listed twice")));
            }
        }
        if self.problems.len() < 2 {
            return Err(Error::InvalidConfig("need at least two problems".into()));
        }
        for p in 1..=PROBLEMS as u8 {
            ProblemGraph::with_start(p, self.start_index[p as usize - 1])
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        self.eb.validate()
    }

    pub fn graph(&self, problem_id: u8) -> Result<ProblemGraph> {
        let idx = problem_id
            .checked_sub(1)
            .filter(|&i| (i as usize) < PROBLEMS)
            .ok_or_else(|| Error::InvalidInput(format!("unknown problem id {problem_id}")))?;
        ProblemGraph::with_start(problem_id, self.start_index[idx as usize])
    }
}

/// Steps until the next switch, uniform on `10..=30`.
pub fn sample_switch_interval<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.gen_range(MIN_INTERVAL..=MAX_INTERVAL)
}

fn check_switch_times(switch_times: &[usize]) -> Result<()> {
    if switch_times.first() == Some(&0) {
        return Err(Error::InvalidInput("switch at t=0".into()));
    }
    if switch_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("switch times must be strictly increasing".into()));
    }
    Ok(())
}

/// CI channel: for each segment a point τ* is drawn strictly inside it, and
/// from τ* to the segment end the row is the one-hot of the problem that
/// starts at the following switch.
///
/// `switch_times` may extend past `len`; those segments are truncated.
/// Returns the matrix and the drawn τ* per segment (absolute times).
pub fn make_ci_stream<R: Rng + ?Sized>(
    len: usize,
    switch_times: &[usize],
    next_problem_ids: &[u8],
    rng: &mut R,
) -> Result<(Matrix, Vec<usize>)> {
    if switch_times.len() != next_problem_ids.len() {
        return Err(Error::InvalidInput(format!(
            "{} switch times but {} next problems",
            switch_times.len(),
            next_problem_ids.len()
        )));
    }
    check_switch_times(switch_times)?;
    if let Some(&p) = next_problem_ids.iter().find(|&&p| !(1..=PROBLEMS as u8).contains(&p)) {
        return Err(Error::InvalidInput(format!("unknown problem id {p}")));
    }

    let mut ci = Matrix::zeros(len, PROBLEMS);
    let mut tau_stars = Vec::with_capacity(switch_times.len());
    let mut seg_start = 0;
    for (&end, &next) in switch_times.iter().zip(next_problem_ids) {
        let seg_len = end - seg_start;
        let tau_star = if seg_len >= 2 {
            seg_start + rng.gen_range(1..seg_len)
        } else {
            end
        };
        for t in tau_star..end.min(len) {
            ci.set(t, next as usize - 1, 1.0);
        }
        tau_stars.push(tau_star);
        seg_start = end;
    }
    Ok((ci, tau_stars))
}

/// EB channel(s) for the given switch schedule.
pub fn make_eb_stream<R: Rng + ?Sized>(
    len: usize,
    switch_times: &[usize],
    variant: &EbVariant,
    rng: &mut R,
) -> Result<Matrix> {
    variant.validate()?;
    check_switch_times(switch_times)?;
    let width = variant.width();
    let mut eb = Matrix::zeros(len, width);
    match *variant {
        EbVariant::Distractor { distractors } => {
            for &s in switch_times {
                if s - 1 < len {
                    eb.set(s - 1, 0, 1.0);
                }
            }
            for t in 0..len {
                for k in 0..distractors {
                    if rng.gen_bool(0.5) {
                        eb.set(t, 1 + k, 1.0);
                    }
                }
            }
        }
        EbVariant::Ramp { channels, ramp_len } => {
            for &s in switch_times {
                for k in 0..channels {
                    let onset = s - ramp_len + (k * (ramp_len - 1)) / channels;
                    let span = (s - onset) as f64;
                    for t in onset..s.min(len) {
                        eb.set(t, k, (t - onset + 1) as f64 / span);
                    }
                }
            }
        }
    }
    Ok(eb)
}

/// One generated stream with all aligned channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub symbols: Vec<Symbol>,
    pub problem_id: Vec<u8>,
    pub switch_flag: Vec<bool>,
    pub ci: Matrix,
    pub eb: Matrix,
    /// Every drawn interval, including the last one that runs past the end.
    pub tau_list: Vec<usize>,
    /// Drawn τ* per segment (absolute time; may exceed the episode length).
    pub tau_star: Vec<usize>,
    /// Switch times inside the episode.
    pub switch_times: Vec<usize>,
    pub seed: u64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Writes `t,symbol,problem_id,switch_flag,ci_*,eb_*` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t,symbol,problem_id,switch_flag")?;
        for k in 0..self.ci.cols() {
            write!(w, ",ci_{k}")?;
        }
        for k in 0..self.eb.cols() {
            write!(w, ",eb_{k}")?;
        }
        writeln!(w)?;
        for t in 0..self.len() {
            write!(
                w,
                "{t},{},{},{}",
                self.symbols[t],
                self.problem_id[t],
                u8::from(self.switch_flag[t])
            )?;
            for v in self.ci.row(t).iter().chain(self.eb.row(t)) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Generates an episode of `len` steps from `seed`.
pub fn generate_episode(config: &TaskConfig, len: usize, seed: u64) -> Result<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ep = generate_episode_with(config, len, &mut rng)?;
    ep.seed = seed;
    Ok(ep)
}

/// Same as [`generate_episode`] but draws from a caller-provided RNG; the
/// returned `seed` field is 0.
pub fn generate_episode_with<R: Rng + ?Sized>(config: &TaskConfig, len: usize, rng: &mut R) -> Result<Episode> {
    config.validate()?;
    if len < 2 {
        return Err(Error::InvalidInput(format!("episode length {len} < 2")));
    }

    let mut current = *config.problems.choose(rng).expect("validated non-empty");
    let mut segments = vec![(0usize, current)];
    let mut tau_list = Vec::new();
    let mut switch_all = Vec::new();
    let mut next_ids = Vec::new();
    let mut t = 0;
    while t < len {
        let tau = sample_switch_interval(rng);
        tau_list.push(tau);
        t += tau;
        let others: Vec<u8> = config.problems.iter().copied().filter(|&p| p != current).collect();
        current = *others.choose(rng).expect("at least two problems");
        switch_all.push(t);
        next_ids.push(current);
        segments.push((t, current));
    }

    let mut symbols = Vec::with_capacity(len);
    let mut problem_id = Vec::with_capacity(len);
    let mut switch_flag = vec![false; len];
    for (i, &(start, pid)) in segments.iter().enumerate() {
        if start >= len {
            break;
        }
        let end = segments.get(i + 1).map_or(len, |s| s.0).min(len);
        let graph = config.graph(pid)?;
        if i > 0 {
            switch_flag[start] = true;
        }
        for k in 0..end - start {
            symbols.push(graph.symbol_at(k));
            problem_id.push(pid);
        }
    }

    let (ci, tau_star) = make_ci_stream(len, &switch_all, &next_ids, rng)?;
    let eb = make_eb_stream(len, &switch_all, &config.eb, rng)?;
    let switch_times = switch_all.iter().copied().filter(|&s| s < len).collect();

    Ok(Episode {
        symbols,
        problem_id,
        switch_flag,
        ci,
        eb,
        tau_list,
        tau_star,
        switch_times,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(problems: &[u8], eb: EbVariant) -> TaskConfig {
        TaskConfig {
            problems: problems.to_vec(),
            eb,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn problem_graphs() {
        let g1 = build_problem_graph(1).unwrap();
        assert_eq!(g1.cycle, vec![Symbol::A, Symbol::B]);
        assert_eq!(g1.start_symbol(), Symbol::A);
        let g2 = build_problem_graph(2).unwrap();
        assert_eq!(g2.cycle, vec![Symbol::B, Symbol::C]);
        assert_eq!(g2.start_symbol(), Symbol::B);
        let g3 = build_problem_graph(3).unwrap();
        assert_eq!(g3.cycle, vec![Symbol::A, Symbol::B, Symbol::C, Symbol::B]);
        assert_eq!(g3.start_symbol(), Symbol::A);
        for g in [g1, g2, g3] {
            let n = g.cycle.len();
            assert_eq!(g.symbol_at(n), g.symbol_at(0));
        }
        assert!(build_problem_graph(0).is_err());
        assert!(build_problem_graph(4).is_err());
        assert!(ProblemGraph::with_start(1, 2).is_err());
    }

    #[test]
    fn one_hot_has_single_one() {
        for id in 0..ALPHABET {
            let v = Symbol::new(id).unwrap().one_hot();
            assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), ALPHABET - 1);
        }
        assert!(Symbol::new(3).is_err());
    }

    #[test]
    fn switch_interval_range_mean_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0usize;
        for _ in 0..n {
            let v = sample_switch_interval(&mut rng);
            assert!((10..=30).contains(&v));
            sum += v;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 20.0).abs() < 0.1, "mean {mean}");

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_switch_interval(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn ci_stream_direct_construction() {
        // Segment of length 12 with τ* = 5 and next problem 2: redraw until
        // the generator lands on τ* = 5, then check the rows directly.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        loop {
            let (ci, taus) = make_ci_stream(12, &[12], &[2], &mut rng).unwrap();
            if taus[0] == 5 {
                for t in 0..5 {
                    assert_eq!(ci.row(t), &[0.0, 0.0, 0.0]);
                }
                for t in 5..12 {
                    assert_eq!(ci.row(t), &[0.0, 1.0, 0.0]);
                }
                break;
            }
        }
        let (ci, taus) = make_ci_stream(12, &[12], &[1], &mut rng).unwrap();
        assert_eq!(ci.row(11), &[1.0, 0.0, 0.0]);
        assert!(taus[0] > 0 && taus[0] < 12);
    }

    #[test]
    fn ci_zero_fraction_is_one_half() {
        // Brute-force expectation: τ* - start uniform on 1..len, so the zero
        // fraction (τ*-start)/len averages to 1/2 for every len.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut frac = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let len = sample_switch_interval(&mut rng);
            let (ci, _) = make_ci_stream(len, &[len], &[1], &mut rng).unwrap();
            let zeros = (0..len).filter(|&t| ci.row(t).iter().all(|&v| v == 0.0)).count();
            frac += zeros as f64 / len as f64;
        }
        let mean = frac / n as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean zero fraction {mean}");
    }

    #[test]
    fn ci_rejects_misaligned_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_ci_stream(20, &[10, 15], &[1], &mut rng).is_err());
        assert!(make_ci_stream(20, &[15, 10], &[1, 2], &mut rng).is_err());
        assert!(make_ci_stream(20, &[10], &[7], &mut rng).is_err());
    }

    #[test]
    fn eb_distractor_indicator_timing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eb = make_eb_stream(30, &[15], &EbVariant::Distractor { distractors: 3 }, &mut rng).unwrap();
        assert_eq!(eb.cols(), 4);
        for t in 0..30 {
            assert_eq!(eb.get(t, 0), if t == 14 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn eb_distractors_are_fair_coins() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eb = make_eb_stream(10_000, &[], &EbVariant::Distractor { distractors: 2 }, &mut rng).unwrap();
        for k in 1..3 {
            let ones = (0..10_000).filter(|&t| eb.get(t, k) == 1.0).count() as f64 / 10_000.0;
            assert!((ones - 0.5).abs() < 0.02, "channel {k}: {ones}");
        }
    }

    #[test]
    fn eb_ramp_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let variant = EbVariant::Ramp {
            channels: 4,
            ramp_len: 5,
        };
        let eb = make_eb_stream(40, &[20], &variant, &mut rng).unwrap();
        for t in 0..=14 {
            assert!(eb.row(t).iter().all(|&v| v == 0.0), "t={t}");
        }
        assert!(eb.row(19).iter().all(|&v| v == 1.0));
        assert!(eb.row(20).iter().all(|&v| v == 0.0));
        // staggered onsets: channel 0 starts at 15, channel 3 at 18
        assert!((eb.get(15, 0) - 0.2).abs() < 1e-15);
        assert_eq!(eb.get(17, 3), 0.0);
        assert!((eb.get(18, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eb_ramp_rejects_long_ramp() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let variant = EbVariant::Ramp {
            channels: 2,
            ramp_len: 10,
        };
        assert!(matches!(
            make_eb_stream(40, &[20], &variant, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn problem_one_cycles_ab() {
        let ep = generate_episode(&cfg(&[1, 2], EbVariant::default()), 400, 3).unwrap();
        let first = ep.switch_times[0];
        for t in 0..first {
            let expected = if ep.problem_id[0] == 1 {
                [Symbol::A, Symbol::B][t % 2]
            } else {
                [Symbol::B, Symbol::C][t % 2]
            };
            assert_eq!(ep.symbols[t], expected);
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(&[1], EbVariant::default()).validate().is_err());
        assert!(cfg(&[1, 1], EbVariant::default()).validate().is_err());
        assert!(cfg(&[1, 4], EbVariant::default()).validate().is_err());
        assert!(cfg(&[1, 2, 3], EbVariant::default()).validate().is_ok());
        assert!(generate_episode(&cfg(&[1, 2], EbVariant::default()), 1, 0).is_err());
    }

    #[test]
    fn short_episode_is_valid() {
        let ep = generate_episode(&cfg(&[1, 2], EbVariant::default()), 5, 0).unwrap();
        assert_eq!(ep.len(), 5);
        assert!(ep.switch_times.is_empty());
    }

    #[test]
    fn all_gaps_within_bounds() {
        for seed in 0..100 {
            let ep = generate_episode(&cfg(&[1, 2, 3], EbVariant::default()), 1000, seed).unwrap();
            let flags: Vec<usize> = (0..ep.len()).filter(|&t| ep.switch_flag[t]).collect();
            assert_eq!(flags, ep.switch_times);
            assert!((10..=30).contains(&flags[0]));
            for w in flags.windows(2) {
                assert!((10..=30).contains(&(w[1] - w[0])));
            }
        }
    }

    #[test]
    fn csv_has_expected_columns() {
        let ep = generate_episode(&cfg(&[1, 2], EbVariant::default()), 3, 0).unwrap();
        let mut buf = Vec::new();
        ep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,symbol,problem_id,switch_flag,ci_0,ci_1,ci_2,eb_0,eb_1,eb_2,eb_3"
        );
        assert_eq!(lines.count(), 3);
    }

    fn eb_strategy() -> impl Strategy<Value = EbVariant> {
        prop_oneof![
            (0usize..4).prop_map(|d| EbVariant::Distractor { distractors: d }),
            (1usize..6, 1usize..10).prop_map(|(c, r)| EbVariant::Ramp {
                channels: c,
                ramp_len: r
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn episode_invariants(
            seed in any::<u64>(),
            three in any::<bool>(),
            len in 2usize..400,
            eb in eb_strategy(),
        ) {
            let problems: &[u8] = if three { &[1, 2, 3] } else { &[1, 2] };
            let config = cfg(problems, eb.clone());
            let ep = generate_episode(&config, len, seed).unwrap();
            prop_assert_eq!(ep.len(), len);
            prop_assert_eq!(ep.ci.rows(), len);
            prop_assert_eq!(ep.eb.shape(), (len, eb.width()));

            // segments follow their graph from the start symbol
            let mut starts = vec![0];
            starts.extend(&ep.switch_times);
            for (i, &s) in starts.iter().enumerate() {
                let end = starts.get(i + 1).copied().unwrap_or(len);
                let graph = config.graph(ep.problem_id[s]).unwrap();
                for t in s..end {
                    prop_assert_eq!(ep.problem_id[t], ep.problem_id[s]);
                    prop_assert_eq!(ep.symbols[t], graph.symbol_at(t - s));
                }
                if i > 0 {
                    prop_assert_ne!(ep.problem_id[s], ep.problem_id[starts[i - 1]]);
                }
            }

            // CI rows are zero or one-hot, and name the problem after the next switch
            for t in 0..len {
                let row = ep.ci.row(t);
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                prop_assert!(zeros == PROBLEMS || (ones == 1 && zeros == PROBLEMS - 1));
                if ones == 1 {
                    let named = row.iter().position(|&v| v == 1.0).unwrap() as u8 + 1;
                    if let Some(&s) = ep.switch_times.iter().find(|&&s| s > t) {
                        prop_assert_eq!(named, ep.problem_id[s]);
                    }
                }
            }
            // CI is zero between a switch and the following τ*
            let mut seg_start = 0;
            for (&s, &ts) in ep.switch_times.iter().zip(&ep.tau_star) {
                prop_assert!(ts > seg_start && ts < s);
                for t in seg_start..ts {
                    prop_assert!(ep.ci.row(t).iter().all(|&v| v == 0.0));
                }
                seg_start = s;
            }

            if let EbVariant::Ramp { ramp_len, .. } = eb {
                for t in 0..len {
                    prop_assert!(ep.eb.row(t).iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
                for &s in &ep.switch_times {
                    let max_at = |t: usize| ep.eb.row(t).iter().copied().fold(0.0, f64::max);
                    for t in s - ramp_len + 1..s {
                        prop_assert!(max_at(t) >= max_at(t - 1));
                    }
                    prop_assert!(ep.eb.row(s - 1).iter().all(|&v| v == 1.0));
                }
            }

            let again = generate_episode(&config, len, seed).unwrap();
            prop_assert_eq!(ep, again);
        }
    }
}

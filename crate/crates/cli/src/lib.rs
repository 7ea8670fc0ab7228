//! Command-line front end for the SUGAR experiments.

pub mod args;
pub mod evaluate;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Parser;
use sugar::evaluation::{compositional_analysis, write_codes_csv, write_gates_csv, write_profile_csv, write_trace_csv};
use sugar::task::generate_episode;
use sugar::training::{check_gradients, derive_seed, train, Checkpoint, ExperimentConfig, LogRow, SEED_TRAIN};
use sugar::Error;

use crate::args::{Cli, Command, Common};
use crate::evaluate::{evaluate, Evaluation};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

/// Why a command failed, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// Anything going wrong while running; exit code 1.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `argv` and runs the command, printing diagnostics to stderr.
/// Returns the process exit code.
pub fn main_with<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code().clamp(0, 255) as u8;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}\n\nFor more information, try '--help'."),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            f.exit_code()
        }
    }
}

/// Builds the experiment config from `--config` and the override flags.
pub fn resolve_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        None => ExperimentConfig::default(),
        Some(path) if !path.is_file() => {
            return Err(Failure::Usage(format!("config file {} not found", path.display())));
        }
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Parse { .. } | Error::InvalidConfig(_) => Failure::Usage(format!("{}: {e}", path.display())),
            other => other.into(),
        })?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(v) = common.variant {
        config.variant = v.into();
    }
    if let Some(p) = common.problems {
        config.task.problems = p.ids();
    }
    if let Some(eb) = common.eb {
        config.task.eb = eb.into();
    }
    if let Some(g) = common.gate {
        config.train.gate = g.into();
    }
    if let Some(w) = common.windows {
        config.train.windows = w;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = resolve_config(&cli.common)?;
    let out = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Gen => gen(&config, &out),
        Command::Train => train_cmd(&config, &out),
        Command::Eval { checkpoint } => {
            let path = checkpoint.unwrap_or_else(|| out.join(CHECKPOINT_FILE));
            eval_cmd(&config, &out, &path)
        }
        Command::Analyze { runs } => analyze(&out, &runs),
        Command::Gradcheck { models, steps } => gradcheck(&config, &out, models, steps),
    }?;
    config.save(&out.join(CONFIG_FILE))?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| std::io::Write::flush(&mut w)).with_context(|| format!("writing {}", path.display()))
}

fn gen(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let seed = derive_seed(config.seed, SEED_TRAIN, 0);
    let episode = generate_episode(&config.task, config.train.episode_len, seed)?;
    write_file(&out.join("episode.csv"), |w| episode.write_csv(w))?;
    println!("wrote {} steps, {} switches", episode.len(), episode.switch_times.len());
    Ok(())
}

fn train_cmd(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let outcome = match train(config) {
        Ok(o) => o,
        Err(Error::Diverged { window, checkpoint }) => {
            let path = out.join("checkpoint.diverged.txt");
            checkpoint.save(&path)?;
            return Err(Failure::Runtime(anyhow::anyhow!(
                "training diverged at window {window}; state saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    outcome.checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    write_file(&out.join("metrics.csv"), |w| {
        use std::io::Write;
        writeln!(w, "{}", LogRow::CSV_HEADER)?;
        for row in &outcome.log {
            writeln!(w, "{}", row.to_csv())?;
        }
        Ok(())
    })?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} windows: loss {:.6}, gate open rate {:.4}, anticipation hit rate {:.3}",
            outcome.checkpoint.windows, last.mean_loss, last.gate_open_rate, last.anticipation_hit_rate
        );
    } else {
        println!("trained {} windows", outcome.checkpoint.windows);
    }
    Ok(())
}

fn load_checkpoint(config: &ExperimentConfig, path: &Path) -> anyhow::Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ck.check_compatible(config)
        .with_context(|| format!("{} does not match the config", path.display()))?;
    Ok(ck)
}

fn eval_cmd(config: &ExperimentConfig, out: &Path, checkpoint: &Path) -> Result<(), Failure> {
    let ck = load_checkpoint(config, checkpoint)?;
    let ev = evaluate(config, &ck.model)?;
    write_eval_outputs(&ev, out)?;
    print!("{}", ev.report());
    Ok(())
}

/// Writes profile.csv, gates.csv, codes.csv, trace.csv and report.txt.
pub fn write_eval_outputs(ev: &Evaluation, out: &Path) -> anyhow::Result<()> {
    let labels: Vec<String> = ev.runs.iter().map(|r| r.policy.to_string()).collect();
    let profiles: Vec<_> = labels.iter().zip(&ev.runs).map(|(l, r)| (l.as_str(), &r.profile)).collect();
    write_file(&out.join("profile.csv"), |w| write_profile_csv(w, &profiles))?;
    let gates: Vec<_> = labels.iter().zip(&ev.runs).map(|(l, r)| (l.as_str(), &r.gates)).collect();
    write_file(&out.join("gates.csv"), |w| write_gates_csv(w, &gates))?;
    let codes: Vec<_> = labels.iter().zip(&ev.runs).map(|(l, r)| (l.as_str(), ev.seed, &r.codes)).collect();
    write_file(&out.join("codes.csv"), |w| write_codes_csv(w, &codes))?;
    write_file(&out.join("trace.csv"), |w| write_trace_csv(w, &ev.primary_run().traces))?;
    fs::write(out.join("report.txt"), ev.report()).with_context(|| format!("writing report in {}", out.display()))?;
    Ok(())
}

fn analyze(out: &Path, runs: &[PathBuf]) -> Result<(), Failure> {
    let results: Vec<anyhow::Result<(String, Evaluation)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|dir| {
                scope.spawn(move || {
                    let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))
                        .with_context(|| format!("loading config of {}", dir.display()))?;
                    let ck = load_checkpoint(&config, &dir.join(CHECKPOINT_FILE))?;
                    let label = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
                    Ok((label, evaluate(&config, &ck.model)?))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });
    let evals = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let codes: Vec<_> = evals
        .iter()
        .map(|(l, e)| (l.as_str(), e.seed, &e.primary_run().codes))
        .collect();
    write_file(&out.join("codes.csv"), |w| write_codes_csv(w, &codes))?;

    let mut report = String::new();
    for (label, e) in &evals {
        let p = e.primary_run();
        let _ = writeln!(
            report,
            "{label}: variant {} seed {} error {:.6} dispersion {:.6} distance {:.6} median interior openings {}",
            e.variant,
            e.seed,
            p.mean_error,
            p.codes.max_dispersion(),
            p.codes.min_pairwise_distance(),
            p.gates.median_interior_openings
        );
    }
    let summaries: Vec<_> = evals.iter().map(|(_, e)| e.primary_run().codes.clone()).collect();
    let comp = compositional_analysis(&summaries);
    let applicable = comp.checks.iter().flatten().count();
    if applicable > 0 {
        for ((label, _), c) in evals.iter().zip(&comp.checks) {
            if let Some(c) = c {
                let lambda = c.projection.map_or("undefined".to_string(), |l| format!("{l:.3}"));
                let _ = writeln!(
                    report,
                    "{} {label}: problem 3 nearer problem 1 {}, projection {lambda}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.closer_to_first
                );
            }
        }
        let _ = writeln!(
            report,
            "compositional: {}/{} passed, {} degenerate",
            comp.passed, applicable, comp.degenerate
        );
    }
    fs::write(out.join("report.txt"), &report).with_context(|| format!("writing report in {}", out.display()))?;
    print!("{report}");
    Ok(())
}

fn gradcheck(config: &ExperimentConfig, out: &Path, models: u64, steps: usize) -> Result<(), Failure> {
    if models == 0 {
        return Err(Failure::Usage("--models must be positive".into()));
    }
    let mut report = String::new();
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for i in 0..models {
        let check = check_gradients(config.variant, config.seed + i, steps).map_err(|e| match e {
            Error::InvalidInput(msg) => Failure::Usage(msg),
            other => other.into(),
        })?;
        worst = worst.max(check.report.max_relative_error());
        passed &= check.passed();
        let _ = writeln!(report, "{check}");
    }
    let _ = writeln!(
        report,
        "max relative error {worst:.3e}, tolerance {:.0e}: {}",
        sugar::training::GRADCHECK_TOLERANCE,
        if passed { "PASS" } else { "FAIL" }
    );
    fs::write(out.join("gradcheck.txt"), &report).with_context(|| format!("writing report in {}", out.display()))?;
    print!("{report}");
    if !passed {
        return Err(Failure::Runtime(anyhow::anyhow!("gradient check failed")));
    }
    Ok(())
}

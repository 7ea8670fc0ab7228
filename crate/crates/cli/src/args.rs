use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sugar::model::{GatePolicy, SugarVariant};
use sugar::task::EbVariant;

#[derive(Debug, Parser)]
#[command(name = "sugar", version, about = "Surprise-gated recurrent networks: generate, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the first training episode as CSV.
    Gen,
    /// Train a model and write its checkpoint and metrics log.
    Train,
    /// Evaluate a checkpoint on fresh test episodes.
    Eval {
        /// Checkpoint to load; defaults to checkpoint.txt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare latent codes across several trained run directories.
    Analyze {
        /// Run directories, each holding config.toml and checkpoint.txt.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Check BPTT gradients against central finite differences.
    Gradcheck {
        /// Number of random models, seeded from --seed upwards.
        #[arg(long, default_value_t = 10)]
        models: u64,
        /// Unroll length.
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, global = true, value_enum)]
    pub problems: Option<ProblemsArg>,
    #[arg(long, global = true, value_enum)]
    pub eb: Option<EbArg>,
    /// Gate schedule used while training and as the primary evaluation run.
    #[arg(long, global = true, value_enum)]
    pub gate: Option<GateArg>,
    /// Number of training windows.
    #[arg(long, global = true)]
    pub windows: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    A,
    B,
    C,
}

impl From<VariantArg> for SugarVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::A => SugarVariant::A,
            VariantArg::B => SugarVariant::B,
            VariantArg::C => SugarVariant::C,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProblemsArg {
    #[value(name = "12")]
    P12,
    #[value(name = "123")]
    P123,
}

impl ProblemsArg {
    pub fn ids(self) -> Vec<u8> {
        match self {
            ProblemsArg::P12 => vec![1, 2],
            ProblemsArg::P123 => vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EbArg {
    Distractor,
    Ramp,
}

impl From<EbArg> for EbVariant {
    fn from(e: EbArg) -> Self {
        match e {
            EbArg::Distractor => EbVariant::Distractor { distractors: 3 },
            EbArg::Ramp => EbVariant::Ramp {
                channels: 4,
                ramp_len: 5,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GateArg {
    Learned,
    Closed,
    Oracle,
}

impl From<GateArg> for GatePolicy {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Learned => GatePolicy::Learned,
            GateArg::Closed => GatePolicy::Closed,
            GateArg::Oracle => GatePolicy::Oracle,
        }
    }
}

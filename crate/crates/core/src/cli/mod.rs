//! Command-line front end: key generation, inference, surrogate fitting,
//! circuit reports, benchmarks and dataset/model helpers.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::activation::ActivationError;
use crate::circuit::{CircuitError, GateCosts};
use crate::ckks::CkksError;
use crate::model_io::ModelIoError;
use crate::nn::NnError;
use crate::train::TrainError;

pub use commands::{bench_rows, BenchRow, PREDICTIONS_HEADER};

pub const SECRET_KEY_FILE: &str = "secret.key";
pub const PUBLIC_KEY_FILE: &str = "public.key";
pub const EVAL_KEY_FILE: &str = "eval.key";

pub const DEFAULT_PRESET: &str = "test-n4096-d8";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    /// A self-check found a wrong result.
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Exit status for failures caught before any work starts.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures during work.
pub const EXIT_RUNTIME: i32 = 1;

impl CliError {
    pub fn is_validation(&self) -> bool {
        match self {
            Self::Usage(_) => true,
            Self::Io { .. } | Self::Check(_) => false,
            Self::Ckks(e) => matches!(e, CkksError::UnknownPreset(_) | CkksError::PresetConfig(_) | CkksError::InvalidParams(_)),
            Self::Nn(e) => matches!(
                e,
                NnError::DepthExhausted { .. }
                    | NnError::BatchTooLarge { .. }
                    | NnError::InputShape { .. }
                    | NnError::UnknownSurrogate { .. }
                    | NnError::InvalidLayer { .. }
                    | NnError::SigmoidUnderEncryption { .. }
            ),
            Self::ModelIo(ModelIoError::Nn(e)) => Self::Nn(e.clone()).is_validation(),
            Self::ModelIo(_) => false,
            Self::Activation(e) => !matches!(e, ActivationError::Ckks(_) | ActivationError::NonFinite),
            Self::Circuit(_) => true,
            Self::Train(e) => !matches!(e, TrainError::Data(_)),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_RUNTIME
        }
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "hecnn", version, about = "Encrypted CNN inference over leveled CKKS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Encrypted,
    /// Encrypted with every noise term forced to zero; keys are derived from
    /// the seed.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Architecture {
    /// Depth 8: runs encrypted at the default preset.
    Compact,
    /// Depth 13: pool, two conv blocks and a hidden dense layer.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainActivation {
    /// Exact ReLU during training; the exported model still names the surrogate.
    Relu,
    /// The published degree-2 surrogate.
    Poly,
}

/// Options shared by every subcommand. Values given here override the
/// `--config` file.
#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML file with defaults for any of the options below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CKKS parameter preset.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// TOML file with extra `[[preset]]` tables.
    #[arg(long, global = true)]
    pub presets: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate secret, public and evaluation keys into a directory.
    Keygen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        keys: Option<PathBuf>,
    },
    /// Classify a dataset file with a model and write predictions.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Images per ciphertext batch.
        #[arg(long)]
        batch: Option<usize>,
        /// Surrogate manifest whose entries replace the model's.
        #[arg(long)]
        surrogates: Option<PathBuf>,
    },
    /// Fit a polynomial activation surrogate and write it as a manifest.
    Approx {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "relu")]
        activation: String,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Half-width B of the fit interval [-B, B]; defaults to the
        /// reference surrogate's 3/(8a).
        #[arg(long)]
        interval: Option<f64>,
        /// Name of the surrogate entry (default `<activation>_poly`).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an adder or multiplier batch and report its parallel schedule.
    Circuit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "add")]
        op: String,
        #[arg(long, default_value_t = 8)]
        bits: usize,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', default_value = "1,10,20,40")]
        workers: Vec<usize>,
        /// Independent operations scheduled together.
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        /// Check every operand pair (at most 8 bits).
        #[arg(long)]
        exhaustive: bool,
        /// Also write the single-operation gate list here.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time plain and encrypted inference layer by layer on the same inputs.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset file.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Train a CNN on a dataset file and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TrainActivation::Poly)]
        activation: TrainActivation,
        #[arg(long, value_enum, default_value_t = Architecture::Compact)]
        arch: Architecture,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Fraction of samples held out for evaluation.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
}

/// Contents of a `--config` file; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub presets: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub keys: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub batch: Option<usize>,
    pub force: Option<bool>,
    pub costs: Option<GateCosts>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub(crate) struct Settings {
    pub preset: String,
    pub presets: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub force: bool,
    pub config: RunConfig,
}

impl Settings {
    fn new(common: &Common) -> Result<Self, CliError> {
        let config = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Self {
            preset: common.preset.clone().or(config.preset.clone()).unwrap_or_else(|| DEFAULT_PRESET.into()),
            presets: common.presets.clone().or(config.presets.clone()),
            seed: common.seed.or(config.seed).unwrap_or(0),
            threads: common.threads.or(config.threads).unwrap_or(0),
            force: common.force || config.force.unwrap_or(false),
            config,
        })
    }

    pub fn path(&self, flag: &Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        flag.clone()
            .or(from_config.clone())
            .ok_or_else(|| CliError::Usage(format!("missing --{what} (flag or config key `{what}`)")))
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Keygen { common, .. }
        | Command::Infer { common, .. }
        | Command::Approx { common, .. }
        | Command::Circuit { common, .. }
        | Command::Bench { common, .. }
        | Command::GenData { common, .. }
        | Command::Train { common, .. } => common,
    }
}

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let settings = Settings::new(common(&cli.command))?;
    let threads = settings.threads;
    // The pool only needs `Send` captures; stdout output is collected first.
    let mut buf = Vec::new();
    let result = crate::with_threads(threads, || commands::dispatch(&cli.command, &settings, &mut buf));
    stdout.write_all(&buf).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    result
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are printed to `stderr` as `error: <message>`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

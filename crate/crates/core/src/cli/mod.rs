//! Command-line front end: one subcommand per pipeline stage.
//!
//! Every stage writes into its own directory under the run directory and
//! records the resolved configuration plus the tool version next to its
//! outputs. Existing outputs are kept unless `--force` is given.
//!
//! Exit codes: 2 schema, 3 config, 4 numeric abort, 5 missing input, 1 other.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{parse_kv, RunConfig, DEFAULT_OUT, ENV_OUT, ENV_WORKERS};
pub use stages::{layout, Layout, RESOLVED_SUFFIX};

use crate::baseline::BaselineError;
use crate::evaluation::EvalError;
use crate::featurize::FeaturizeError;
use crate::ingest::IngestError;
use crate::model::{Mode, ModelError};
use crate::numkernel::NumError;
use crate::pipeline::PipelineError;
use crate::sampler::{SamplerError, Split};
use crate::synth::SynthError;
use crate::training::TrainError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("config: {0}")]
    Config(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::MissingInput(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

fn io_error(e: &std::io::Error, path: Option<&std::path::Path>, msg: String) -> CliError {
    match (e.kind(), path) {
        (std::io::ErrorKind::NotFound, Some(p)) => CliError::MissingInput(p.to_path_buf()),
        _ => CliError::Other(msg),
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::Io { file, source } => io_error(source, Some(file), e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match &e {
            SamplerError::BadRatios(_) => CliError::Config(e.to_string()),
            SamplerError::Io(io) => io_error(io, None, e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<FeaturizeError> for CliError {
    fn from(e: FeaturizeError) -> Self {
        match &e {
            FeaturizeError::Io(io) => io_error(io, None, e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::MissingInput(p) => CliError::MissingInput(p),
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Featurize(e) => e.into(),
            PipelineError::Sampler(e) => e.into(),
            e @ (PipelineError::Format { .. } | PipelineError::Csv(_)) => CliError::Schema(e.to_string()),
            PipelineError::Io(e) => CliError::Other(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) | SynthError::Infeasible(_) => CliError::Config(e.to_string()),
            SynthError::Sampler(e) => e.into(),
            SynthError::Ingest(e) => e.into(),
            SynthError::Format { .. } | SynthError::Csv(_) => CliError::Schema(e.to_string()),
            SynthError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::Checkpoint(_) | NumError::Shape(_) => CliError::Schema(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Config(e.to_string()),
            ModelError::Num(e) => e.into(),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Undefined(_) => CliError::Numeric(e.to_string()),
            EvalError::Io(_) => CliError::Other(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::EmptyTrainingSet => CliError::Schema(e.to_string()),
            TrainError::Model(e) => e.into(),
            TrainError::Num(e) => e.into(),
            TrainError::Eval(e) => e.into(),
            TrainError::Csv(_) => CliError::Schema(e.to_string()),
            TrainError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Num(e) => e.into(),
            BaselineError::SingleClass => CliError::Numeric(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}

/// Multimodal ICU deterioration prediction pipeline.
///
/// Stages read and write under one run directory: synth → bundle/,
/// ingest → cohort/, featurize → features/, sample → samples/,
/// train → models/<mode>/, evaluate and calibrate → eval/<mode>/,
/// report → report/<mode>/.
#[derive(Debug, Parser)]
#[command(name = "icu-deterioration", version, about, long_about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value config file; sections synth., model., train., data., logreg.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable); applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run directory for all stage outputs [env: ICU_DET_OUT] [default: icu-run]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for featurization and prediction, 0 for one per core [env: ICU_DET_WORKERS]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Master seed; derives the synth, split and training seeds.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overwrite existing outputs of the stage.
    #[arg(long, global = true)]
    pub force: bool,
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, value_name = "LEVEL", default_value = "info")]
    pub log_level: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Multimodal,
    #[value(name = "structured_only", alias = "structured-only")]
    StructuredOnly,
    #[value(name = "text_only", alias = "text-only")]
    TextOnly,
    Logreg,
}

impl ModeArg {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeArg::Multimodal => "multimodal",
            ModeArg::StructuredOnly => "structured_only",
            ModeArg::TextOnly => "text_only",
            ModeArg::Logreg => "logreg",
        }
    }

    /// The network mode, or `None` for the logistic baseline.
    pub fn network(self) -> Option<Mode> {
        match self {
            ModeArg::Multimodal => Some(Mode::Multimodal),
            ModeArg::StructuredOnly => Some(Mode::StructuredOnly),
            ModeArg::TextOnly => Some(Mode::TextOnly),
            ModeArg::Logreg => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event-table bundle with planted outcomes.
    Synth {
        /// Number of patients (same as --set synth.n_patients=N).
        #[arg(long, value_name = "N")]
        n_patients: Option<usize>,
    },
    /// Parse event tables, select the cohort and extract outcomes.
    Ingest {
        /// Directory with the event tables [default: <out>/bundle]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Build hourly grids and fit the normalizer on the training patients.
    Featurize {
        /// Directory with the event tables [default: the one ingest read]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Write the patient split manifest and per-split sample audits.
    Sample {
        /// Note embedding CSV [default: embeddings.csv beside the event tables]
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },
    /// Train one model variant; writes checkpoints and the epoch history.
    Train {
        #[arg(long, value_enum, default_value = "multimodal")]
        mode: ModeArg,
        /// Note embedding CSV [default: embeddings.csv beside the event tables]
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// Continue from the last checkpoint of an interrupted run.
        #[arg(long)]
        resume: bool,
        /// Stop after this epoch, leaving a checkpoint that --resume continues from.
        #[arg(long, value_name = "N")]
        stop_after_epoch: Option<usize>,
    },
    /// Score a split with a trained model and write the metrics report.
    Evaluate {
        #[arg(long, value_enum, default_value = "multimodal")]
        mode: ModeArg,
        /// Split to report on; the decision threshold always comes from validation.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Note embedding CSV [default: embeddings.csv beside the event tables]
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },
    /// Fit a temperature on validation scores and recalibrate the evaluated split.
    Calibrate {
        #[arg(long, value_enum, default_value = "multimodal")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Write ROC, PR, reliability and training-history CSVs.
    Report {
        #[arg(long, value_enum, default_value = "multimodal")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Featurize { .. } => "featurize",
            Command::Sample { .. } => "sample",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Calibrate { .. } => "calibrate",
            Command::Report { .. } => "report",
        }
    }
}

/// Builds the run configuration from defaults, file, environment and flags.
pub fn resolve(global: &GlobalArgs, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        cfg.load_file(path)?;
    }
    cfg.apply_env(env)?;
    let pairs = global
        .set
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    cfg.apply(&pairs)?;
    if let Some(seed) = global.seed {
        cfg.set_master_seed(seed);
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

/// Parses `args` and runs one stage.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve(&cli.global, |k| std::env::var(k).ok())?;
    if let Command::Synth { n_patients: Some(n) } = cli.command {
        cfg.synth.n_patients = n;
    }
    if cfg.workers > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    log::info!("icu-deterioration {VERSION}: {} in {}", cli.command.name(), cfg.out.display());
    stages::run_stage(&cli.command, &cfg, cli.global.force)
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(cli.global.log_level.as_str()))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

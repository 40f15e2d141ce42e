use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod common;
mod config;
mod data;
mod develop;
mod infer;
mod manifest;

use config::FileConfig;

/// Completeness checking of data processing agreements.
#[derive(Parser, Debug)]
#[command(name = "dpacheck", version, about)]
struct Cli {
    /// TOML run configuration; flags override its keys
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a DPA into sentences and normalize party names
    Preprocess(data::PreprocessArgs),
    /// Split a labelled corpus into development and evaluation DPAs
    Split(data::SplitArgs),
    /// Per-provision sentence counts of a labelled corpus
    Stats(data::StatsArgs),
    /// Build a balanced or augmented training-set variant
    Balance(develop::BalanceArgs),
    /// Generate augmented variants of the positive sentences only
    Augment(develop::AugmentArgs),
    /// Train a binary suite or a single classifier
    Train(develop::TrainArgs),
    /// Hyperparameter grid search scored by validation F2
    Grid(develop::GridArgs),
    /// Train a contrastive few-shot classifier
    Fewshot(develop::FewshotArgs),
    /// Sentence-level predictions for DPA documents
    Predict(infer::PredictArgs),
    /// Completeness report for DPA documents
    Check(infer::CheckArgs),
    /// DPA-level metrics of a model on a labelled corpus
    Evaluate(infer::EvaluateArgs),
    /// Cohen's kappa between two annotation files
    Kappa(infer::KappaArgs),
    /// Per-stage runtime of the inference pipeline
    Bench(infer::BenchArgs),
    /// Check the integrity of an embedding store file
    ValidateStore(data::ValidateStoreArgs),
    /// Embed sentences into a store file through a provider
    Embed(data::EmbedArgs),
    /// Write the bundled synthetic corpus, store and documents
    Synth(data::SynthArgs),
}

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments (exit 1).
    Usage(String),
    /// Data, validation or external-service failure (exit 2 or 3).
    Core(dpacheck::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(dpacheck::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_external() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl From<dpacheck::Error> for CliError {
    fn from(e: dpacheck::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Shared state handed to every command.
pub struct Ctx {
    pub cfg: FileConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx { cfg };
    let go = || match cli.command {
        Command::Preprocess(a) => data::preprocess(&ctx, a),
        Command::Split(a) => data::split(&ctx, a),
        Command::Stats(a) => data::stats(&ctx, a),
        Command::Balance(a) => develop::balance(&ctx, a),
        Command::Augment(a) => develop::augment(&ctx, a),
        Command::Train(a) => develop::train(&ctx, a),
        Command::Grid(a) => develop::grid(&ctx, a),
        Command::Fewshot(a) => develop::fewshot(&ctx, a),
        Command::Predict(a) => infer::predict(&ctx, a),
        Command::Check(a) => infer::check(&ctx, a),
        Command::Evaluate(a) => infer::evaluate(&ctx, a),
        Command::Kappa(a) => infer::kappa(&ctx, a),
        Command::Bench(a) => infer::bench(&ctx, a),
        Command::ValidateStore(a) => data::validate_store(&ctx, a),
        Command::Embed(a) => data::embed(&ctx, a),
        Command::Synth(a) => data::synth(&ctx, a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => dpacheck::par::with_threads(n, go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpacheck: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dropsvm_core::Error;

mod commands;
mod model_file;
mod settings;

use settings::ConfigFile;

/// Dropout training for linear SVMs and logistic regression.
#[derive(Debug, Parser)]
#[command(name = "dropsvm", version)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write it with a training log (`<out>.log`).
    Train(TrainArgs),
    /// Score a model on a test file, optionally after deleting features.
    Eval(EvalArgs),
    /// Run a named protocol and write its result table.
    Experiment {
        #[arg(value_enum)]
        protocol: Protocol,
        #[command(flatten)]
        args: ExperimentArgs,
    },
    /// Write `<out>.train.svm` and `<out>.test.svm`.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[command(flatten)]
        args: SynthArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    BinarySweep,
    ExplicitVsImplicit,
    Nightmare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Blobs,
    RedundantSparse,
}

#[derive(Debug, Args)]
pub struct TrainerArgs {
    /// dropout-svm, dropout-logistic, mcf-quadratic or explicit
    /// (comma-separated for experiments).
    #[arg(long)]
    pub trainer: Option<String>,
    /// none, dropout, gaussian, laplace or poisson.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub ell: Option<f64>,
    /// Corrupted copies per example (a list for explicit-vs-implicit).
    #[arg(long = "M")]
    pub copies: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Train without the offset.
    #[arg(long)]
    pub no_offset: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integer class labels, one-vs-all training.
    #[arg(long)]
    pub multiclass: bool,
    /// Divide each feature by its largest magnitude before training.
    #[arg(long)]
    pub scale_features: bool,
    #[command(flatten)]
    pub trainer: TrainerArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Fraction of stored test features to delete.
    #[arg(long)]
    pub deletion: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV file to append a result row to.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Deletion fractions (nightmare).
    #[arg(long)]
    pub deletion: Option<String>,
    #[arg(long)]
    pub grid_c: Option<String>,
    #[arg(long)]
    pub grid_q: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write gnuplot data here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[command(flatten)]
    pub trainer: TrainerArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Test examples (default: same as `--n`).
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Blobs only: more than two classes gives multiclass files.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Output prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> dropsvm_core::Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let threads = cfg.get(cli.threads, "threads")?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(args) => commands::train(&args, &cfg),
        Command::Eval(args) => commands::eval(&args, &cfg),
        Command::Experiment { protocol, args } => commands::experiment(protocol, &args, &cfg),
        Command::Synth { kind, args } => commands::synth(kind, &args, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

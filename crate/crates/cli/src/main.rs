//! `ibnet`: simulate cohorts, build interbrain graphs, embed them and run
//! leakage-free evaluations, recording every run in a JSON-lines ledger.

mod commands;
mod report;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ibnet_core::Error;

#[derive(Debug, Parser)]
#[command(name = "ibnet", version, about = "Interbrain network classification pipelines")]
pub struct Cli {
    /// Master seed. Falls back to the config file, then IBNET_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON object of option values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Run ledger (JSON lines).
    #[arg(long, global = true, value_name = "FILE")]
    pub ledger: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: manifest plus signal CSVs.
    Simulate(SimulateArgs),
    /// Connectivity matrices for every recording of a manifest.
    Connect(ConnectArgs),
    /// Interbrain graphs from connectivity matrices.
    Graph(GraphArgs),
    /// Fit an encoder (or load one) and embed graphs.
    Embed(EmbedArgs),
    /// Nested cross-validation of one pipeline.
    Cv(PipelineArgs),
    /// Train on HBO graphs, score HBR graphs.
    Cct(CctArgs),
    /// Compare a pipeline against runs on shuffled dyad labels.
    Permtest(PermtestArgs),
    /// Bayesian correlated t-test between two cross-validation results.
    Compare(CompareArgs),
    /// Encoder by estimator by classifier table from the ledger.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// default, lagged or null.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub dyads_per_class: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub conditions: Option<usize>,
    /// Block length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// How recordings become graphs.
#[derive(Debug, Args, Clone)]
pub struct GraphOptions {
    /// WCO, PLV or ENTROPY.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Period band in seconds, `LO,HI`.
    #[arg(long, value_name = "LO,HI")]
    pub band: Option<String>,
    /// Largest lag scanned by the entropy estimator, in seconds.
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// `none` or `top:P` to keep the heaviest fraction P of edges.
    #[arg(long)]
    pub reduction: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConnectArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphOptions,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Directory of connectivity JSON files.
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub reduction: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct EncoderOptions {
    /// FC, NMF-IBNE, LDP, Graph2Vec, GL2Vec, DWC, Scattering or Feather.
    #[arg(long)]
    pub encoder: Option<String>,
    /// Embedding size (NMF-IBNE, Graph2Vec, GL2Vec).
    #[arg(long)]
    pub delta: Option<usize>,
    /// Weisfeiler-Lehman depth (Graph2Vec, GL2Vec).
    #[arg(long)]
    pub wl_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Directory of graph JSON files.
    #[arg(long, value_name = "DIR")]
    pub graphs: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderOptions,
    /// Apply a saved encoder state instead of fitting one.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Where the graphs of a pipeline come from.
#[derive(Debug, Args, Clone)]
pub struct InputOptions {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Directory of graph JSON files.
    #[arg(long, value_name = "DIR")]
    pub graphs: Option<PathBuf>,
    /// Generate a cohort in memory (default, lagged or null).
    #[arg(long, value_name = "PRESET", num_args = 0..=1, default_missing_value = "default")]
    pub simulate: Option<String>,
    #[command(flatten)]
    pub graph: GraphOptions,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: InputOptions,
    #[arg(long)]
    pub encoder: Option<String>,
    /// Ridge or SVM.
    #[arg(long)]
    pub classifier: Option<String>,
    /// Hyperparameter evaluations per outer fold.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub k_out: Option<usize>,
    #[arg(long)]
    pub k_inner: Option<usize>,
    /// Run outer folds one after another.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CctArgs {
    #[command(flatten)]
    pub input: InputOptions,
    #[command(flatten)]
    pub encoder: EncoderOptions,
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub permutations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First cross-validation result.
    pub a: PathBuf,
    /// Second cross-validation result; differences are a − b.
    pub b: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// text or csv.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

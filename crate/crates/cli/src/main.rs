//! `meshmatch`: featurize, train, block, match and evaluate mesh datasets.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bad flags, bad config, or a command invoked in the wrong state.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An internal consistency check failed.
#[derive(Debug)]
pub struct InvariantError(pub String);

impl std::fmt::Display for InvariantError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantError {}

const THREADS_ENV: &str = "MESHMATCH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "meshmatch", version, about = "Entity resolution over 3D polygon meshes")]
struct Cli {
    /// TOML pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the property matrix of one dataset.
    Featurize(FeaturizeArgs),
    /// Generate a synthetic benchmark bundle.
    GenBench(GenBenchArgs),
    /// Derive a contaminated variant of a benchmark bundle.
    Contaminate(ContaminateArgs),
    /// Build splits and train the blocking model and the matcher.
    Train(TrainArgs),
    /// Generate blocking candidates with the trained key.
    Block(BlockArgs),
    /// Classify candidate pairs.
    Match(MatchArgs),
    /// Recompute metrics from the artifacts of a run.
    Eval(RunArgs),
    /// PC and RR over a grid of key sizes and k.
    Sweep(SweepArgs),
    /// Consolidated tables and curve files for a run.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    Cityjson,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Index,
    Candidate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    Importance,
    Std,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ContaminationMode {
    Swap,
    DirtyClean,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Guessed from the extension when omitted (.jsonl or .json).
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long, value_enum, default_value = "candidate")]
    pub role: Role,
    /// Write log1p-normalized values.
    #[arg(long)]
    pub normalize: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenBenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise on footprint and height factors.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Systematic factor on footprint and height.
    #[arg(long)]
    pub r_g: Option<f64>,
    #[arg(long)]
    pub unmatched: Option<f64>,
    #[arg(long)]
    pub complexity: Option<usize>,
    /// Index holds only the matched entities.
    #[arg(long)]
    pub disjoint: bool,
}

#[derive(Args, Debug)]
pub struct ContaminateArgs {
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "swap")]
    pub mode: ContaminationMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Benchmark bundle to build splits from.
    #[arg(long, requires = "run")]
    pub bench: Option<PathBuf>,
    /// Run directory for the trained artifacts.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Labelled pair CSV to train a matcher from directly.
    #[arg(long, conflicts_with = "bench", requires = "model")]
    pub pairs: Option<PathBuf>,
    /// Output model file when training from --pairs.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pick matcher depth and size by 5-fold CV over a small grid.
    #[arg(long)]
    pub grid_search: bool,
}

#[derive(Args, Debug)]
pub struct BlockArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub fb_size: Option<usize>,
    #[arg(long, value_enum)]
    pub criterion: Option<Criterion>,
    /// Enable distance pruning at this quantile of training-match distances.
    #[arg(long, conflicts_with = "no_prune")]
    pub prune_quantile: Option<f64>,
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Candidate CSV to classify instead of the held-out test pairs.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10,20")]
    pub k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,8")]
    pub fb_list: Vec<usize>,
    #[arg(long, value_enum)]
    pub criterion: Option<Criterion>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        1
    } else if err.downcast_ref::<InvariantError>().is_some() {
        3
    } else {
        2
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| UsageError(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let cfg = config::PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Featurize(a) => commands::featurize(cfg, &a),
        Command::GenBench(a) => commands::gen_bench(cfg, &a),
        Command::Contaminate(a) => commands::contaminate(&a),
        Command::Train(a) => commands::train(cfg, &a),
        Command::Block(a) => commands::block(&a),
        Command::Match(a) => commands::match_pairs(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

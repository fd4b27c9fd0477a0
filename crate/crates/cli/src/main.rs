//! `playstyle` command-line driver. Every stage reads and writes fixed file
//! names inside a working directory, so stages chain without extra flags.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use playstyle::dpcluster::MeanUpdate;

#[derive(Parser)]
#[command(
    name = "playstyle",
    version,
    about = "Discover play styles from match telemetry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic match log with planted styles.
    Simulate(SimulateArgs),
    /// Parse, filter and encode a match log into a design matrix.
    Ingest(IngestArgs),
    /// Hold out test rows and fit the global and per-player regressions.
    Fit(FitArgs),
    /// Cluster per-player styles with the Gibbs sampler.
    Sample(SampleArgs),
    /// Produce metrics, cluster reports, stability labels and profiles.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "work")]
    pub dir: PathBuf,
    /// JSON file with generator settings; flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub players: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Matches per player, either `N` or `LO-HI`.
    #[arg(long)]
    pub matches: Option<String>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub hybrid_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long, default_value = "work")]
    pub dir: PathBuf,
    /// Match log to read instead of `<dir>/matches.jsonl`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Vocabulary JSON; names outside it are rejected instead of discovered.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, default_value = "work")]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-player ridge penalty; defaults to a small data-scaled value.
    #[arg(long)]
    pub lambda_p: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MeanRule {
    PosteriorMode,
    PosteriorDraw,
    MemberAverage,
}

impl From<MeanRule> for MeanUpdate {
    fn from(r: MeanRule) -> Self {
        match r {
            MeanRule::PosteriorMode => MeanUpdate::PosteriorMode,
            MeanRule::PosteriorDraw => MeanUpdate::PosteriorDraw,
            MeanRule::MemberAverage => MeanUpdate::MemberAverage,
        }
    }
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long, default_value = "work")]
    pub dir: PathBuf,
    /// JSON sampler configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sweeps to run (additional sweeps when resuming).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub thinning: Option<usize>,
    /// Initial number of K-means clusters.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub mean_update: Option<MeanRule>,
    #[arg(long)]
    pub resample_sigma2: bool,
    /// Continue from `<dir>/checkpoint.json`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value = "work")]
    pub dir: PathBuf,
    /// Burn-in for stability labels; defaults to the sampler's.
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub top: usize,
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    /// Coefficients below this magnitude are left out of top lists.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Players to profile (comma separated); default is every player.
    #[arg(long, value_delimiter = ',')]
    pub players: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sample(a) => commands::sample(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let core = e.chain().find_map(|c| c.downcast_ref::<playstyle::Error>());
            let line = serde_json::json!({
                "error": {
                    "kind": core.map_or("cli", |c| c.kind()),
                    "line": core.and_then(|c| c.line()),
                    "message": format!("{e:#}"),
                }
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

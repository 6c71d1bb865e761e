//! `mflab`: command-line experiment runner.
//!
//! Exit codes: 0 success, 1 `--check` violation, 2 invalid input, 3 diverged.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "mflab",
    version,
    about = "Mean-field ReLU networks, neural trees and path norms"
)]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Flat `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a network or tree at one point.
    Eval(EvalArgs),
    /// Path-norm proxy, layer norms and Q of a model.
    Pathnorm(PathnormArgs),
    /// Rebalance layer norms without changing the function.
    Balance(ConvertArgs),
    /// Unfold a network into its equivalent tree.
    ToTree(ConvertArgs),
    /// Fold a tree back into a network.
    Flatten(ConvertArgs),
    /// Draw one Maurey tree and measure its L2 error.
    Maurey(MaureyArgs),
    /// Error statistics of Maurey trees over a list of widths.
    RateSweep(RateSweepArgs),
    /// Plain gradient descent on a dataset or a target network.
    Train(TrainArgs),
    /// Gradient descent with the path-norm penalty.
    TrainReg(TrainArgs),
    /// Rademacher complexity estimates.
    Rademacher(RademacherArgs),
    /// Train regularized students and compare test risk with the a priori bound.
    GenGap(GenGapArgs),
    /// Build networks from others: composition, sums, max/min, products.
    Compose(ComposeArgs),
    /// Random target network, optionally with a labelled dataset.
    MakeTarget(MakeTargetArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub model: Option<PathBuf>,
    /// Input point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
}

#[derive(Args, Debug)]
pub struct PathnormArgs {
    pub model: Option<PathBuf>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaureyArgs {
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the sampled tree.
    #[arg(long)]
    pub tree_out: Option<PathBuf>,
    #[arg(long)]
    pub check: bool,
}

#[derive(Args, Debug)]
pub struct RateSweepArgs {
    pub model: Option<PathBuf>,
    /// Increasing widths, comma separated.
    #[arg(long)]
    pub ms: Option<String>,
    /// Independent trees per width.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Initial network.
    pub model: Option<PathBuf>,
    /// Training data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target network for population training (instead of `--data`).
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// `squared` or `clipped`.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub cap: Option<f64>,
    /// Penalty weight; `train-reg` defaults to 9 L² / m.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Value of the ReLU derivative at 0: 0 or 1.
    #[arg(long)]
    pub sigma_prime: Option<u8>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trained network destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trajectory CSV destination; stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub check: bool,
}

#[derive(Args, Debug)]
pub struct RademacherArgs {
    /// Sample points from a dataset CSV (labels ignored).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Otherwise draw `n` uniform points in `[-1,1]^d`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// 0 for the affine class, otherwise the network depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Enumerate all sign patterns (affine class, small samples).
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long)]
    pub draws: Option<usize>,
    /// Restarts per draw for the deep lower estimate.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenGapArgs {
    /// Target network f*.
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Student seeds, comma separated.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ComposeArgs {
    /// Input networks; for `compose` the outer network comes first.
    pub inputs: Vec<PathBuf>,
    /// compose, add, max, min, product, abs, relu, scale, lift or translate.
    #[arg(long)]
    pub op: Option<String>,
    /// Bound on |f|, |g| for `product`.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub quad_points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub factor: Option<f64>,
    #[arg(long)]
    pub extra: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MakeTargetArgs {
    /// Hidden widths, comma separated.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Path-norm proxy of the result.
    #[arg(long)]
    pub proxy: Option<f64>,
    /// `uniform` or `gaussian` weights.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a labelled dataset of `n` points.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Invalid(anyhow::Error),
    Diverged(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<mflab::Error> for Failure {
    fn from(e: mflab::Error) -> Self {
        match e {
            mflab::Error::Diverged { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Invalid(other.into()),
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("mflab: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = setup(&cli).and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("mflab: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("mflab: {}", one_line(&e));
            ExitCode::from(2)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("mflab: {msg}");
            ExitCode::from(3)
        }
    }
}

fn setup(cli: &Cli) -> Result<Config, Failure> {
    if cli.threads == 0 {
        return Err(anyhow::anyhow!("--threads must be at least 1").into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(anyhow::Error::from)?;
    Ok(match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvgraph::devlab::{BiasExperimentConfig, RateExperimentConfig, TailGridConfig};
use tvgraph::kernel::KernelFamily;
use tvgraph::simgen::EvolutionConfig;
use tvgraph_cli::commands::{self, EstimateConfig, PathConfig, TrackConfig, TrackSource};
use tvgraph_cli::config::load;
use tvgraph_cli::{lab, CliError};

#[derive(Parser, Debug)]
#[command(name = "tvgraph", version, about = "Time-varying sparse Gaussian graphical models")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Smoothing {
    #[arg(long)]
    data: Option<PathBuf>,
    /// boxcar, epanechnikov or truncated_gaussian.
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// Fixed bandwidth; otherwise 5.848 · n^(-1/3).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    penalize_diagonal: bool,
    /// Threshold on |θ_ij| for reporting an edge.
    #[arg(long)]
    zero_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a trajectory and sample one observation per step.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Estimate the precision matrix at one time point.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        smoothing: Smoothing,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Regularization path with risk, precision and recall per penalty.
    Path {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        smoothing: Smoothing,
        #[arg(long)]
        t0: Option<f64>,
        /// Comma-separated penalties.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// True trajectory (JSONL) for truth and oracle columns.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Steps at which churned edges enter or leave the estimate.
    Track {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        smoothing: Smoothing,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
        /// Track the true edge sets instead of estimates.
        #[arg(long)]
        oracle: bool,
    },
    /// Numerical experiments on the smoothed covariance.
    Devlab {
        #[command(subcommand)]
        experiment: Experiment,
    },
}

#[derive(Args, Debug, Clone)]
struct LabArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Closed-form vs Monte-Carlo moment generating function.
    Mgf(LabArgs),
    /// Deterministic smoother bias across bandwidths.
    Bias(LabArgs),
    /// Monte-Carlo tail probabilities over a grid of n.
    Tail(LabArgs),
    /// Frobenius error of the estimator as n grows.
    Rate(LabArgs),
}

fn apply_smoothing(
    s: &Smoothing,
    data: &mut Option<PathBuf>,
    kernel: &mut KernelFamily,
    bandwidth: &mut Option<f64>,
    penalize_diagonal: &mut bool,
    zero_tol: &mut Option<f64>,
) {
    if s.data.is_some() {
        *data = s.data.clone();
    }
    if let Some(k) = s.kernel {
        *kernel = k;
    }
    if s.bandwidth.is_some() {
        *bandwidth = s.bandwidth;
    }
    if s.penalize_diagonal {
        *penalize_diagonal = true;
    }
    if s.zero_tol.is_some() {
        *zero_tol = s.zero_tol;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { common, seed, steps, p } => {
            let mut cfg: EvolutionConfig = load(common.config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(p) = p {
                cfg.p = p;
            }
            let summary = commands::run_simulate(&cfg, &common.out)?;
            println!(
                "simulated {} steps, p = {}, {} edges at the last step",
                summary.steps, summary.p, summary.final_edges
            );
        }
        Command::Estimate {
            common,
            smoothing,
            t0,
            lambda,
        } => {
            let mut cfg: EstimateConfig = load(common.config.as_deref())?;
            apply_smoothing(
                &smoothing,
                &mut cfg.data,
                &mut cfg.kernel,
                &mut cfg.bandwidth,
                &mut cfg.penalize_diagonal,
                &mut cfg.zero_tol,
            );
            if let Some(t) = t0 {
                cfg.t0 = t;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            let doc = commands::run_estimate(&cfg, &common.out)?;
            println!(
                "estimated p = {} at t0 = {}: {} edges, KKT residual {:e}",
                doc.p, doc.meta.t0, doc.meta.edge_count, doc.meta.kkt_residual
            );
        }
        Command::Path {
            common,
            smoothing,
            t0,
            lambdas,
            truth,
        } => {
            let mut cfg: PathConfig = load(common.config.as_deref())?;
            apply_smoothing(
                &smoothing,
                &mut cfg.data,
                &mut cfg.kernel,
                &mut cfg.bandwidth,
                &mut cfg.penalize_diagonal,
                &mut cfg.zero_tol,
            );
            if let Some(t) = t0 {
                cfg.t0 = t;
            }
            if lambdas.is_some() {
                cfg.lambdas = lambdas;
            }
            if truth.is_some() {
                cfg.truth = truth;
            }
            let outcome = commands::run_path(&cfg, &common.out)?;
            println!("{} path points written", outcome.reports.len());
        }
        Command::Track {
            common,
            smoothing,
            truth,
            lambda,
            stride,
            oracle,
        } => {
            let mut cfg: TrackConfig = load(common.config.as_deref())?;
            apply_smoothing(
                &smoothing,
                &mut cfg.data,
                &mut cfg.kernel,
                &mut cfg.bandwidth,
                &mut cfg.penalize_diagonal,
                &mut cfg.zero_tol,
            );
            if truth.is_some() {
                cfg.truth = truth;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if let Some(s) = stride {
                cfg.stride = s;
            }
            if oracle {
                cfg.source = TrackSource::Truth;
            }
            let outcome = commands::run_track(&cfg, &common.out)?;
            let s = &outcome.summary;
            println!(
                "{} evaluations: {}/{} added edges detected, {}/{} removed edges dropped",
                s.evaluations, s.added_detected, s.added, s.removed_detected, s.removed
            );
        }
        Command::Devlab { experiment } => match experiment {
            Experiment::Mgf(args) => {
                let mut cfg: lab::MgfConfig = load(args.common.config.as_deref())?;
                if let Some(s) = args.seed {
                    cfg.seed = s;
                }
                if args.kernel.is_some() {
                    return Err(CliError::config("--kernel does not apply to mgf"));
                }
                let rows = lab::run_mgf(&cfg, &args.common.out)?;
                println!("{} mgf rows written", rows.len());
            }
            Experiment::Bias(args) => {
                let mut cfg: BiasExperimentConfig = load(args.common.config.as_deref())?;
                if let Some(k) = args.kernel {
                    cfg.kernel = k;
                }
                if args.seed.is_some() {
                    return Err(CliError::config("--seed does not apply to bias (it is deterministic)"));
                }
                let report = lab::run_bias_cmd(&cfg, &args.common.out)?;
                println!("{} bias points written", report.points.len());
            }
            Experiment::Tail(args) => {
                let mut cfg: TailGridConfig = load(args.common.config.as_deref())?;
                if let Some(s) = args.seed {
                    cfg.seed = s;
                }
                if let Some(k) = args.kernel {
                    cfg.kernel = k;
                }
                let report = lab::run_tail_cmd(&cfg, &args.common.out)?;
                match report.envelope {
                    Some(e) => println!("tail envelope rate {:.4} over {} points", e.rate_constant, e.points_used),
                    None => println!("tail envelope undetermined (fewer than two nonzero tails)"),
                }
            }
            Experiment::Rate(args) => {
                let mut cfg: RateExperimentConfig = load(args.common.config.as_deref())?;
                if let Some(s) = args.seed {
                    cfg.seed = s;
                }
                if let Some(k) = args.kernel {
                    cfg.kernel = k;
                }
                let report = lab::run_rate_cmd(&cfg, &args.common.out)?;
                match report.loglog_slope {
                    Some(s) => println!("log-log slope {s:.4}"),
                    None => println!("log-log slope undetermined"),
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

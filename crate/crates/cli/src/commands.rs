//! `simulate`, `estimate`, `path` and `track`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tvgraph::glasso::{
    default_zero_tol, lambda_grid, lambda_max, regularization_path, Glasso, GlassoError, GlassoFit, PenaltySpec,
    SolverOptions,
};
use tvgraph::kernel::{bandwidth_rule, smoothed_covariance, KernelFamily, KernelSpec, DEFAULT_BANDWIDTH_SCALE};
use tvgraph::matrix::{CovarianceMatrix, EdgeSet};
use tvgraph::risk::{edge_latencies, match_by_l1, EdgeLatency, MatchedPair, PathPoint, RiskReport};
use tvgraph::simgen::io::{
    events_from_records, read_data_csv, read_trajectory_jsonl, write_data_csv, write_trajectory_jsonl, StepRecord,
};
use tvgraph::simgen::{generate_trajectory, nearest_index, sample_data, EvolutionConfig};
use tvgraph::TimeSeriesData;

use crate::config::{check_nonnegative, check_positive, check_unit_interval, open, require, write_json, write_output};
use crate::error::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const DATA_FILE: &str = "data.csv";

fn read_data(path: &Path) -> Result<TimeSeriesData, CliError> {
    read_data_csv(open(path)?).map_err(|e| CliError::input(path, e))
}

fn read_truth(path: &Path) -> Result<Vec<StepRecord>, CliError> {
    read_trajectory_jsonl(open(path)?).map_err(|e| CliError::input(path, e))
}

fn kernel_for(family: KernelFamily, bandwidth: Option<f64>, scale: f64, n: usize) -> Result<KernelSpec, CliError> {
    let h = match bandwidth {
        Some(h) => h,
        None => {
            check_positive("bandwidth_scale", scale)?;
            bandwidth_rule(n, scale)
        }
    };
    Ok(KernelSpec::new(family, h)?)
}

fn solver(tol: f64, max_iter: usize) -> Result<Glasso, CliError> {
    check_positive("tol", tol)?;
    if max_iter == 0 {
        return Err(CliError::config("max_iter must be positive"));
    }
    Ok(Glasso::new(SolverOptions {
        tol,
        max_iter,
        diagonal_jitter: None,
    }))
}

fn zero_tol_for(fixed: Option<f64>, fit: &GlassoFit) -> f64 {
    fixed.unwrap_or_else(|| default_zero_tol(&fit.theta))
}

// ---------------------------------------------------------------------------

pub fn run_simulate(config: &EvolutionConfig, out: &Path) -> Result<GraphSummary, CliError> {
    let trajectory = generate_trajectory(config)?;
    let data = sample_data(&trajectory, config.seed);
    let mut jsonl = Vec::new();
    write_trajectory_jsonl(&trajectory, &mut jsonl).map_err(|e| CliError::input(out.join(TRAJECTORY_FILE), e))?;
    write_output(out, TRAJECTORY_FILE, &jsonl)?;
    let mut csv = Vec::new();
    write_data_csv(&data, &mut csv).map_err(|e| CliError::input(out.join(DATA_FILE), e))?;
    write_output(out, DATA_FILE, &csv)?;
    Ok(GraphSummary {
        steps: trajectory.steps(),
        p: trajectory.p(),
        final_edges: trajectory.edge_sets.last().map_or(0, EdgeSet::len),
        max_edges: trajectory.edge_sets.iter().map(EdgeSet::len).max().unwrap_or(0),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub steps: usize,
    pub p: usize,
    pub final_edges: usize,
    pub max_edges: usize,
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub data: Option<PathBuf>,
    pub t0: f64,
    pub kernel: KernelFamily,
    /// Fixed bandwidth; `None` uses `bandwidth_scale · n^{-1/3}`.
    pub bandwidth: Option<f64>,
    pub bandwidth_scale: f64,
    pub lambda: f64,
    pub penalize_diagonal: bool,
    /// Edge threshold; `None` uses `1e-6 · max |θ|`.
    pub zero_tol: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            data: None,
            t0: 1.0,
            kernel: KernelFamily::default(),
            bandwidth: None,
            bandwidth_scale: DEFAULT_BANDWIDTH_SCALE,
            lambda: 0.1,
            penalize_diagonal: false,
            zero_tol: None,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateMeta {
    pub lambda: f64,
    pub penalize_diagonal: bool,
    pub h: f64,
    pub kernel: KernelFamily,
    pub t0: f64,
    pub n: usize,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub zero_tol: f64,
    pub edge_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecisionJson {
    pub p: usize,
    pub entries: Vec<f64>,
    pub meta: EstimateMeta,
}

pub const PRECISION_FILE: &str = "precision.json";
pub const EDGES_FILE: &str = "edges.csv";

/// Fits `Θ̂(t0)` and writes `precision.json` and `edges.csv`. A fit that hits
/// `max_iter` is still written (best iterate, `converged: false`) and then
/// reported as [`CliError::NotConverged`].
pub fn run_estimate(config: &EstimateConfig, out: &Path) -> Result<PrecisionJson, CliError> {
    check_unit_interval("t0", config.t0)?;
    check_nonnegative("lambda", config.lambda)?;
    if let Some(z) = config.zero_tol {
        check_nonnegative("zero_tol", z)?;
    }
    let solver = solver(config.tol, config.max_iter)?;
    let data_path = require(config.data.as_deref(), "data file (--data)")?;
    let data = read_data(data_path)?;
    let spec = kernel_for(config.kernel, config.bandwidth, config.bandwidth_scale, data.n())?;
    let s_hat = smoothed_covariance(&data, config.t0, &spec)?;
    let penalty = PenaltySpec::new(config.lambda, config.penalize_diagonal)?;
    let (fit, converged) = match solver.fit(&s_hat, penalty) {
        Ok(fit) => (fit, true),
        Err(GlassoError::MaxIterationsExceeded { best }) => (*best, false),
        Err(e) => return Err(e.into()),
    };
    let zero_tol = zero_tol_for(config.zero_tol, &fit);
    let edges = fit.edges(zero_tol);
    let doc = PrecisionJson {
        p: fit.theta.dim(),
        entries: fit.theta.matrix().to_row_major(),
        meta: EstimateMeta {
            lambda: config.lambda,
            penalize_diagonal: config.penalize_diagonal,
            h: spec.bandwidth,
            kernel: spec.family,
            t0: config.t0,
            n: data.n(),
            kkt_residual: fit.kkt_residual,
            iterations: fit.iterations,
            converged,
            objective: fit.objective,
            zero_tol,
            edge_count: edges.len(),
        },
    };
    write_json(out, PRECISION_FILE, &doc)?;
    let mut csv = String::from("i,j,theta_ij\n");
    for (i, j) in edges.iter() {
        csv.push_str(&format!("{i},{j},{}\n", fit.theta.get(i, j)));
    }
    write_output(out, EDGES_FILE, csv.as_bytes())?;
    if !converged {
        return Err(CliError::NotConverged(format!(
            "KKT residual {:e} after {} iterations; outputs hold the best iterate",
            fit.kkt_residual, fit.iterations
        )));
    }
    Ok(doc)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub data: Option<PathBuf>,
    pub t0: f64,
    pub kernel: KernelFamily,
    pub bandwidth: Option<f64>,
    pub bandwidth_scale: f64,
    /// Explicit grid (any order); `None` uses `grid_size` log-spaced values
    /// from `λ_max` down to `λ_max · min_ratio`.
    pub lambdas: Option<Vec<f64>>,
    pub grid_size: usize,
    pub min_ratio: f64,
    pub penalize_diagonal: bool,
    pub zero_tol: Option<f64>,
    /// Trajectory JSONL with the true `Θ(t)`; enables truth and oracle columns.
    pub truth: Option<PathBuf>,
    /// Oracle path resolution used for ℓ1 matching.
    pub oracle_grid_size: usize,
    /// Relative ℓ1 distance allowed between matched points.
    pub match_tolerance: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            data: None,
            t0: 1.0,
            kernel: KernelFamily::default(),
            bandwidth: None,
            bandwidth_scale: DEFAULT_BANDWIDTH_SCALE,
            lambdas: None,
            grid_size: 20,
            min_ratio: 0.01,
            penalize_diagonal: false,
            zero_tol: None,
            truth: None,
            oracle_grid_size: 200,
            match_tolerance: 0.05,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Oracle columns of one path row: the oracle fit at the same `λ`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleColumns {
    pub l1_norm: f64,
    pub edge_count: usize,
    pub predictive_risk: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub t0: f64,
    pub h: f64,
    pub lambdas: usize,
    pub edge_count_inversions: usize,
    pub recall_inversions: Option<usize>,
    pub matched_pairs: Option<usize>,
    pub oracle_wins: Option<usize>,
    pub oracle_win_fraction: Option<f64>,
    pub pairs: Vec<MatchedPair>,
}

#[derive(Debug, Clone)]
pub struct PathOutcome {
    /// Rows in increasing `λ`.
    pub reports: Vec<RiskReport>,
    pub oracle: Option<Vec<OracleColumns>>,
    pub summary: PathSummary,
}

pub const PATH_FILE: &str = "path.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn descending_grid(config: &PathConfig, s_hat: &CovarianceMatrix) -> Result<Vec<f64>, CliError> {
    let mut grid = match &config.lambdas {
        Some(l) => l.clone(),
        None => {
            if config.grid_size == 0 {
                return Err(CliError::config("grid_size must be positive"));
            }
            check_positive("min_ratio", config.min_ratio)?;
            lambda_grid(lambda_max(s_hat), config.grid_size, config.min_ratio)
        }
    };
    if grid.is_empty() {
        return Err(CliError::config("empty lambda grid"));
    }
    for &l in &grid {
        check_nonnegative("lambda", l)?;
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("lambda grid contains duplicates"));
    }
    Ok(grid)
}

fn inversions<T: PartialOrd + Copy>(values: impl Iterator<Item = T>) -> usize {
    let v: Vec<T> = values.collect();
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

pub fn run_path(config: &PathConfig, out: &Path) -> Result<PathOutcome, CliError> {
    let outcome = compute_path(config)?;
    let mut csv = String::from(RiskReport::CSV_HEADER);
    if outcome.oracle.is_some() {
        csv.push_str(",oracle_l1_norm,oracle_edge_count,oracle_predictive_risk");
    }
    csv.push('\n');
    for (k, r) in outcome.reports.iter().enumerate() {
        csv.push_str(&r.csv_row());
        if let Some(o) = &outcome.oracle {
            csv.push_str(&format!(",{},{},{}", o[k].l1_norm, o[k].edge_count, o[k].predictive_risk));
        }
        csv.push('\n');
    }
    write_output(out, PATH_FILE, csv.as_bytes())?;
    write_json(out, SUMMARY_FILE, &outcome.summary)?;
    Ok(outcome)
}

/// The path computation behind `run_path`, without writing files.
pub fn compute_path(config: &PathConfig) -> Result<PathOutcome, CliError> {
    check_unit_interval("t0", config.t0)?;
    if let Some(z) = config.zero_tol {
        check_nonnegative("zero_tol", z)?;
    }
    let options = solver(config.tol, config.max_iter)?.options;
    let data_path = require(config.data.as_deref(), "data file (--data)")?;
    let data = read_data(data_path)?;
    let truth = match &config.truth {
        Some(path) => {
            let records = read_truth(path)?;
            let k = nearest_index(&records.iter().map(|r| r.t).collect::<Vec<_>>(), config.t0);
            let record = &records[k];
            if record.p != data.p() {
                return Err(CliError::config(format!(
                    "truth has p = {}, data has p = {}",
                    record.p,
                    data.p()
                )));
            }
            Some((record.covariance().map_err(|e| CliError::input(path, e))?, record.edge_set()))
        }
        None => None,
    };
    let spec = kernel_for(config.kernel, config.bandwidth, config.bandwidth_scale, data.n())?;
    let s_hat = smoothed_covariance(&data, config.t0, &spec)?;
    let grid = descending_grid(config, &s_hat)?;
    let fits = regularization_path(&s_hat, &grid, config.penalize_diagonal, options)?;

    let truth_ref = truth.as_ref().map(|(s, f)| (s, f));
    let mut reports = fits
        .iter()
        .map(|fit| RiskReport::evaluate(fit, &s_hat, zero_tol_for(config.zero_tol, fit), truth_ref))
        .collect::<Result<Vec<_>, _>>()?;
    reports.reverse();

    let mut summary = PathSummary {
        t0: config.t0,
        h: spec.bandwidth,
        lambdas: reports.len(),
        edge_count_inversions: inversions(reports.iter().map(|r| r.edge_count)),
        recall_inversions: None,
        matched_pairs: None,
        oracle_wins: None,
        oracle_win_fraction: None,
        pairs: Vec::new(),
    };

    let oracle = match &truth {
        None => None,
        Some((sigma0, f_true)) => {
            let oracle_fits = regularization_path(sigma0, &grid, config.penalize_diagonal, options)?;
            let mut columns = oracle_fits
                .iter()
                .map(|fit| {
                    let r = RiskReport::evaluate(fit, sigma0, zero_tol_for(config.zero_tol, fit), Some((sigma0, f_true)))?;
                    Ok(OracleColumns {
                        l1_norm: r.l1_norm,
                        edge_count: r.edge_count,
                        predictive_risk: r.empirical_risk,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            columns.reverse();

            // Dense oracle path for ℓ1 matching.
            let smallest = grid.last().copied().unwrap_or(0.0);
            let top = lambda_max(sigma0).max(grid[0]);
            let floor = if smallest > 0.0 { smallest / 10.0 } else { top * 1e-4 };
            let dense = lambda_grid(top, config.oracle_grid_size.max(2), floor / top);
            let dense_fits = regularization_path(sigma0, &dense, config.penalize_diagonal, options)?;
            let oracle_points = dense_fits
                .iter()
                .map(|fit| {
                    Ok(PathPoint {
                        lambda: fit.penalty.lambda,
                        l1_norm: fit.l1_norm(),
                        predictive_risk: tvgraph::risk::predictive_risk_of_precision(&fit.theta, sigma0)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let empirical_points: Vec<PathPoint> = reports
                .iter()
                .map(|r| PathPoint {
                    lambda: r.lambda,
                    l1_norm: r.l1_norm,
                    predictive_risk: r.predictive_risk.expect("truth supplied"),
                })
                .collect();
            let pairs = match_by_l1(&empirical_points, &oracle_points, config.match_tolerance);
            let wins = pairs.iter().filter(|p| p.oracle_wins()).count();
            summary.recall_inversions = Some(inversions(reports.iter().map(|r| r.recall.unwrap_or(0.0))));
            summary.matched_pairs = Some(pairs.len());
            summary.oracle_wins = Some(wins);
            summary.oracle_win_fraction = (!pairs.is_empty()).then(|| wins as f64 / pairs.len() as f64);
            summary.pairs = pairs;
            Some(columns)
        }
    };
    Ok(PathOutcome {
        reports,
        oracle,
        summary,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    /// Smoothed graphical lasso estimates.
    #[default]
    Estimate,
    /// True edge sets read from the trajectory.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub kernel: KernelFamily,
    pub bandwidth: Option<f64>,
    pub bandwidth_scale: f64,
    pub lambda: f64,
    pub penalize_diagonal: bool,
    pub zero_tol: Option<f64>,
    /// Evaluate every `stride`-th step, starting at step 0.
    pub stride: usize,
    pub source: TrackSource,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            data: None,
            truth: None,
            kernel: KernelFamily::default(),
            bandwidth: None,
            bandwidth_scale: DEFAULT_BANDWIDTH_SCALE,
            lambda: 0.1,
            penalize_diagonal: false,
            zero_tol: None,
            stride: 1,
            source: TrackSource::Estimate,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackSummary {
    pub evaluations: usize,
    pub h: f64,
    pub lambda: f64,
    pub added: usize,
    pub added_detected: usize,
    pub removed: usize,
    pub removed_detected: usize,
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub rows: Vec<EdgeLatency>,
    pub summary: TrackSummary,
}

pub const TRACK_FILE: &str = "track.csv";
pub const TRACK_SUMMARY_FILE: &str = "track_summary.json";

pub fn run_track(config: &TrackConfig, out: &Path) -> Result<TrackOutcome, CliError> {
    let outcome = compute_track(config)?;
    let mut csv = format!("{}\n", EdgeLatency::CSV_HEADER);
    for r in &outcome.rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_output(out, TRACK_FILE, csv.as_bytes())?;
    write_json(out, TRACK_SUMMARY_FILE, &outcome.summary)?;
    Ok(outcome)
}

pub fn compute_track(config: &TrackConfig) -> Result<TrackOutcome, CliError> {
    check_nonnegative("lambda", config.lambda)?;
    if config.stride == 0 {
        return Err(CliError::config("stride must be positive"));
    }
    if let Some(z) = config.zero_tol {
        check_nonnegative("zero_tol", z)?;
    }
    let solver = solver(config.tol, config.max_iter)?;
    let data_path = require(config.data.as_deref(), "data file (--data)")?;
    let truth_path = require(config.truth.as_deref(), "truth trajectory (--truth)")?;
    let data = read_data(data_path)?;
    let records = read_truth(truth_path)?;
    let aligned = records.len() == data.n()
        && records.iter().zip(data.times()).all(|(r, &t)| (r.t - t).abs() <= 1e-12)
        && records.iter().all(|r| r.p == data.p());
    if !aligned {
        return Err(CliError::config("truth trajectory is not aligned with the data (steps, times or p differ)"));
    }
    let spec = kernel_for(config.kernel, config.bandwidth, config.bandwidth_scale, data.n())?;
    let penalty = PenaltySpec::new(config.lambda, config.penalize_diagonal)?;
    let steps: Vec<usize> = (0..data.n()).step_by(config.stride).collect();
    let estimates: Vec<EdgeSet> = match config.source {
        TrackSource::Truth => steps.iter().map(|&k| records[k].edge_set()).collect(),
        TrackSource::Estimate => steps
            .par_iter()
            .map(|&k| -> Result<EdgeSet, CliError> {
                let s_hat = smoothed_covariance(&data, data.times()[k], &spec)?;
                let fit = solver.fit(&s_hat, penalty)?;
                Ok(fit.edges(zero_tol_for(config.zero_tol, &fit)))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let events = events_from_records(&records);
    let rows = edge_latencies(&events, &steps, &estimates);
    let count = |kind: tvgraph::risk::ChangeKind, detected: bool| {
        rows.iter()
            .filter(|r| r.kind == kind && (!detected || r.detected_step.is_some()))
            .count()
    };
    use tvgraph::risk::ChangeKind::{Added, Removed};
    let summary = TrackSummary {
        evaluations: steps.len(),
        h: spec.bandwidth,
        lambda: config.lambda,
        added: count(Added, false),
        added_detected: count(Added, true),
        removed: count(Removed, false),
        removed_detected: count(Removed, true),
    };
    Ok(TrackOutcome { rows, summary })
}

//! Numerical laboratory for the smoothed covariance estimator.
//!
//! - closed-form moment generating function of a product of two correlated
//!   normals, with a Monte-Carlo counterpart;
//! - deterministic smoother bias `Σ_k w_k σ_ij(t_k) − σ_ij(t₀)`;
//! - Monte-Carlo tail probabilities `P(|Ŝ − E Ŝ| > ε)` and an exponential
//!   envelope fit `ln tail ≈ a − ĉ · n h ε²`;
//! - Frobenius error of the smoothed graphical lasso as `n` grows.
//!
//! Every experiment is deterministic given its seed: replicates draw from
//! independent per-replicate streams and results are reduced in index order.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::MatrixCurve;
use crate::data::uniform_grid;
use crate::glasso::{Glasso, GlassoError, PenaltySpec, SolverOptions};
use crate::kernel::{bandwidth_rule, smoothed_covariance, smoothing_weights, KernelError, KernelFamily, KernelSpec};
use crate::matrix::{MatrixError, SymmetricMatrix};
use crate::rng::{self, derive_seed, Domain};
use crate::simgen::{generate_trajectory, sample_data, EvolutionConfig, SimgenError};

#[derive(Debug, Error, Clone)]
pub enum DevlabError {
    #[error("mgf undefined at t = {t} (singularity at or before t)")]
    OutOfDomain { t: f64 },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Simgen(#[from] SimgenError),
    #[error(transparent)]
    Glasso(#[from] GlassoError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, DevlabError> {
    Err(DevlabError::InvalidConfig(msg.into()))
}

// ---------------------------------------------------------------------------
// Moment generating function

/// `E exp(t Z_i Z_j)` for `(Z_i, Z_j)` centered normal with standard deviations
/// `σ_i, σ_j` and correlation `ρ`:
///
/// ```text
/// [(1 − t(σ_iσ_j + σ_ij)) (1 + t(σ_iσ_j − σ_ij))]^{−1/2},   σ_ij = ρ σ_i σ_j
/// ```
pub fn mgf_product_normals(t: f64, sigma_i: f64, sigma_j: f64, rho: f64) -> Result<f64, DevlabError> {
    if !(sigma_i > 0.0 && sigma_j > 0.0) || !sigma_i.is_finite() || !sigma_j.is_finite() {
        return invalid(format!("standard deviations must be positive, got {sigma_i}, {sigma_j}"));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return invalid(format!("correlation must lie in [-1, 1], got {rho}"));
    }
    if !t.is_finite() {
        return Err(DevlabError::OutOfDomain { t });
    }
    let ss = sigma_i * sigma_j;
    let sij = rho * ss;
    let a = 1.0 - t * (ss + sij);
    let b = 1.0 + t * (ss - sij);
    if !(a > 0.0 && b > 0.0) {
        return Err(DevlabError::OutOfDomain { t });
    }
    Ok((a * b).powf(-0.5))
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloMean {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

const MC_CHUNKS: usize = 64;

/// Sample mean of `exp(t Z_i Z_j)`. Draws are split over a fixed number of
/// streams, so the result does not depend on the thread count.
pub fn mgf_monte_carlo(t: f64, sigma_i: f64, sigma_j: f64, rho: f64, draws: usize, seed: u64) -> MonteCarloMean {
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let partial: Vec<(f64, f64, usize)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let count = draws / MC_CHUNKS + usize::from(chunk < draws % MC_CHUNKS);
            let mut rng = rng::stream(seed, Domain::Replicate, chunk as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                let zi = sigma_i * u;
                let zj = sigma_j * (rho * u + c * v);
                let x = (t * zi * zj).exp();
                s += x;
                s2 += x * x;
            }
            (s, s2, count)
        })
        .collect();
    let (s, s2, n) = partial.iter().fold((0.0, 0.0, 0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    MonteCarloMean {
        mean,
        std_error: (var / nf).sqrt(),
        draws: n,
    }
}

// ---------------------------------------------------------------------------
// Covariance curves supplied by configuration

/// Covariance curve `Σ(t)` given in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    /// `Σ(t) = matrix` (rows).
    Constant { matrix: Vec<Vec<f64>> },
    /// `Σ(t) = Σ_k coefficients[k] t^k`.
    Polynomial { coefficients: Vec<Vec<Vec<f64>>> },
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        CovarianceSpec::Constant {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<SymmetricMatrix, DevlabError> {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(SymmetricMatrix::from_rows(&refs)?)
}

impl CovarianceSpec {
    pub fn curve(&self) -> Result<MatrixCurve, DevlabError> {
        match self {
            CovarianceSpec::Constant { matrix } => Ok(MatrixCurve::constant(rows_to_matrix(matrix)?)),
            CovarianceSpec::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return invalid("polynomial needs at least one coefficient");
                }
                let mats = coefficients
                    .iter()
                    .map(|c| rows_to_matrix(c))
                    .collect::<Result<Vec<_>, _>>()?;
                if mats.iter().any(|m| m.dim() != mats[0].dim()) {
                    return invalid("polynomial coefficients differ in dimension");
                }
                Ok(MatrixCurve::polynomial(mats))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Constant { matrix } => matrix.len(),
            CovarianceSpec::Polynomial { coefficients } => coefficients.first().map_or(0, |c| c.len()),
        }
    }
}

fn check_entry(curve_dim: usize, (i, j): (usize, usize)) -> Result<(), DevlabError> {
    if i >= curve_dim || j >= curve_dim {
        return invalid(format!("entry ({i}, {j}) out of range for dimension {curve_dim}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bias

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub h: f64,
    /// `Σ_k w_k σ_ij(t_k) − σ_ij(t₀)`.
    pub bias: f64,
    pub abs_bias: f64,
}

/// Exact smoother bias of entry `(i, j)` at `t0` for each bandwidth, on the
/// uniform grid of `n` points.
pub fn bias_curve(
    curve: &MatrixCurve,
    entry: (usize, usize),
    t0: f64,
    family: KernelFamily,
    h_values: &[f64],
    n: usize,
) -> Result<Vec<BiasPoint>, DevlabError> {
    check_entry(curve.evaluate(t0).dim(), entry)?;
    let (i, j) = entry;
    let times = uniform_grid(n);
    let values: Vec<f64> = times.iter().map(|&t| curve.evaluate(t).get(i, j)).collect();
    let truth = curve.evaluate(t0).get(i, j);
    h_values
        .iter()
        .map(|&h| {
            let w = smoothing_weights(&KernelSpec::new(family, h)?, &times, t0)?;
            let mean: f64 = w.iter().zip(&values).map(|(w, v)| w * v).sum();
            let bias = mean - truth;
            Ok(BiasPoint {
                h,
                bias,
                abs_bias: bias.abs(),
            })
        })
        .collect()
}

pub const BIAS_CSV_HEADER: &str = "h,bias,abs_bias";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BiasExperimentConfig {
    pub covariance: CovarianceSpec,
    pub entry: (usize, usize),
    pub t0: f64,
    pub kernel: KernelFamily,
    pub h_values: Vec<f64>,
    pub n: usize,
}

impl Default for BiasExperimentConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceSpec::default(),
            entry: (0, 0),
            t0: 1.0,
            kernel: KernelFamily::Boxcar,
            h_values: vec![0.4, 0.2, 0.1, 0.05],
            n: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub points: Vec<BiasPoint>,
    /// `|bias(h_{k+1})| / |bias(h_k)|` for consecutive bandwidths.
    pub ratios: Vec<Option<f64>>,
}

pub fn run_bias(config: &BiasExperimentConfig) -> Result<BiasReport, DevlabError> {
    let curve = config.covariance.curve()?;
    let points = bias_curve(&curve, config.entry, config.t0, config.kernel, &config.h_values, config.n)?;
    let ratios = points
        .windows(2)
        .map(|w| (w[0].abs_bias > 0.0).then(|| w[1].abs_bias / w[0].abs_bias))
        .collect();
    Ok(BiasReport { points, ratios })
}

impl BiasReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BIAS_CSV_HEADER}\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.h, p.bias, p.abs_bias));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Tail probabilities

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TailExperimentConfig {
    pub n: usize,
    pub h: f64,
    pub epsilon: f64,
    pub replicates: usize,
    pub covariance: CovarianceSpec,
    pub entry: (usize, usize),
    pub kernel: KernelFamily,
    pub t0: f64,
    /// Rate `c` of the reference bound `exp(−c n h ε²)`.
    pub bound_rate: f64,
    pub seed: u64,
}

impl Default for TailExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            h: 0.1,
            epsilon: 0.25,
            replicates: 10_000,
            covariance: CovarianceSpec::default(),
            entry: (0, 0),
            kernel: KernelFamily::Boxcar,
            t0: 0.5,
            bound_rate: 1.0,
            seed: 0,
        }
    }
}

/// Tail replicates below this count are reported but flagged as unreliable.
pub const MIN_TAIL_REPLICATES: usize = 1000;

impl TailExperimentConfig {
    pub fn validate(&self) -> Result<(), DevlabError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.replicates == 0 {
            return invalid("replicates must be positive");
        }
        if self.n == 0 {
            return invalid("n must be positive");
        }
        if !(0.0..=1.0).contains(&self.t0) {
            return invalid(format!("t0 must lie in [0, 1], got {}", self.t0));
        }
        KernelSpec::new(self.kernel, self.h)?;
        check_entry(self.covariance.dim(), self.entry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailResult {
    pub n: usize,
    pub h: f64,
    pub epsilon: f64,
    /// `n h ε²`.
    pub exponent: f64,
    pub replicates: usize,
    pub exceedances: usize,
    pub empirical_tail: f64,
    pub bound_value: f64,
    /// Exact `E Ŝ(t₀)_ij = Σ_k w_k σ_ij(t_k)`.
    pub expectation: f64,
}

// Per-observation sampling plan for the pair (Z_i, Z_j).
struct PairLaw {
    weight: f64,
    sd_i: f64,
    sd_j: f64,
    rho: f64,
}

pub fn tail_probability(config: &TailExperimentConfig) -> Result<TailResult, DevlabError> {
    config.validate()?;
    let curve = config.covariance.curve()?;
    let (i, j) = config.entry;
    let times = uniform_grid(config.n);
    let weights = smoothing_weights(&KernelSpec::new(config.kernel, config.h)?, &times, config.t0)?;
    let mut laws = Vec::new();
    let mut expectation = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let s = curve.evaluate(times[k]);
        let (sii, sjj, sij) = (s.get(i, i), s.get(j, j), s.get(i, j));
        if !(sii > 0.0 && sjj > 0.0) || sij * sij > sii * sjj * (1.0 + 1e-12) {
            return invalid(format!("covariance curve is not positive definite at t = {}", times[k]));
        }
        expectation += w * sij;
        let rho = (sij / (sii * sjj).sqrt()).clamp(-1.0, 1.0);
        laws.push(PairLaw {
            weight: w,
            sd_i: sii.sqrt(),
            sd_j: sjj.sqrt(),
            rho,
        });
    }
    let diagonal = i == j;
    let exceedances: usize = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(config.seed, Domain::Replicate, r as u64);
            let mut s_hat = 0.0;
            for law in &laws {
                let u: f64 = rng.sample(StandardNormal);
                let zi = law.sd_i * u;
                let zj = if diagonal {
                    zi
                } else {
                    let v: f64 = rng.sample(StandardNormal);
                    law.sd_j * (law.rho * u + (1.0 - law.rho * law.rho).sqrt() * v)
                };
                s_hat += law.weight * zi * zj;
            }
            usize::from((s_hat - expectation).abs() > config.epsilon)
        })
        .sum();
    let exponent = config.n as f64 * config.h * config.epsilon * config.epsilon;
    Ok(TailResult {
        n: config.n,
        h: config.h,
        epsilon: config.epsilon,
        exponent,
        replicates: config.replicates,
        exceedances,
        empirical_tail: exceedances as f64 / config.replicates as f64,
        bound_value: (-config.bound_rate * exponent).exp(),
        expectation,
    })
}

/// Grid of tail experiments with `h = bandwidth_scale · n^{−1/3}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TailGridConfig {
    pub n_values: Vec<usize>,
    pub bandwidth_scale: f64,
    pub epsilon: f64,
    pub replicates: usize,
    pub covariance: CovarianceSpec,
    pub entry: (usize, usize),
    pub kernel: KernelFamily,
    pub t0: f64,
    pub bound_rate: f64,
    pub seed: u64,
}

impl Default for TailGridConfig {
    fn default() -> Self {
        Self {
            n_values: vec![250, 500, 1000, 2000],
            bandwidth_scale: 1.0,
            epsilon: 0.25,
            replicates: 10_000,
            covariance: CovarianceSpec::default(),
            entry: (0, 0),
            kernel: KernelFamily::Boxcar,
            t0: 0.5,
            bound_rate: 1.0,
            seed: 0,
        }
    }
}

/// Least-squares line `ln tail = intercept + slope · n h ε²` over nonzero tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `ĉ = −slope`.
    pub rate_constant: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailGridReport {
    pub rows: Vec<TailResult>,
    /// Fraction of adjacent pairs (in increasing `n`) whose tail does not increase.
    pub monotone_fraction: f64,
    /// `None` when fewer than two nonzero tails are available.
    pub envelope: Option<EnvelopeFit>,
}

pub const TAIL_CSV_HEADER: &str = "n,h,epsilon,exponent,replicates,exceedances,empirical_tail,bound_value,expectation";

impl TailGridReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TAIL_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n, r.h, r.epsilon, r.exponent, r.replicates, r.exceedances, r.empirical_tail, r.bound_value, r.expectation
            ));
        }
        out
    }
}

pub fn tail_grid(config: &TailGridConfig) -> Result<TailGridReport, DevlabError> {
    if config.n_values.is_empty() || config.n_values.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("n_values must be nonempty and strictly increasing");
    }
    let rows = config
        .n_values
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            tail_probability(&TailExperimentConfig {
                n,
                h: bandwidth_rule(n, config.bandwidth_scale),
                epsilon: config.epsilon,
                replicates: config.replicates,
                covariance: config.covariance.clone(),
                entry: config.entry,
                kernel: config.kernel,
                t0: config.t0,
                bound_rate: config.bound_rate,
                seed: derive_seed(config.seed, idx as u64),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pairs = rows.len().saturating_sub(1);
    let monotone = rows.windows(2).filter(|w| w[1].empirical_tail <= w[0].empirical_tail).count();
    let monotone_fraction = if pairs == 0 { 1.0 } else { monotone as f64 / pairs as f64 };
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.exceedances > 0)
        .map(|r| (r.exponent, r.empirical_tail.ln()))
        .unzip();
    let envelope = least_squares(&xs, &ys).map(|(slope, intercept)| EnvelopeFit {
        slope,
        intercept,
        rate_constant: -slope,
        points_used: xs.len(),
    });
    Ok(TailGridReport {
        rows,
        monotone_fraction,
        envelope,
    })
}

/// Ordinary least squares `y = intercept + slope · x`; `None` with fewer than
/// two distinct abscissae.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

// ---------------------------------------------------------------------------
// Frobenius rate

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RateExperimentConfig {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    /// Graph parameters; `steps`, `churn_period` and `seed` are set per run.
    pub trajectory: EvolutionConfig,
    /// Churn period as a fraction of the run length, so the curve `Θ(t)` is
    /// the same for every `n`.
    pub churn_fraction: f64,
    /// `λ_n = lambda_scale · sqrt(ln n / n^{2/3})`.
    pub lambda_scale: f64,
    /// `h_n = bandwidth_scale · n^{−1/3}`.
    pub bandwidth_scale: f64,
    pub kernel: KernelFamily,
    pub penalize_diagonal: bool,
    pub t0: f64,
    pub seed: u64,
}

impl Default for RateExperimentConfig {
    fn default() -> Self {
        Self {
            n_values: vec![200, 400, 800, 1600],
            replicates: 10,
            trajectory: EvolutionConfig {
                p: 20,
                steps: 200,
                base_diag: 0.25,
                initial_edges: 20,
                churn_period: 200,
                churn_count: 2,
                weight_range: [0.1, 0.3],
                seed: 0,
            },
            churn_fraction: 0.5,
            lambda_scale: 0.1,
            bandwidth_scale: crate::kernel::DEFAULT_BANDWIDTH_SCALE,
            kernel: KernelFamily::TruncatedGaussian,
            penalize_diagonal: false,
            t0: 1.0,
            seed: 0,
        }
    }
}

pub fn rate_lambda(n: usize, scale: f64) -> f64 {
    let nf = n as f64;
    scale * (nf.ln() / nf.powf(2.0 / 3.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub h: f64,
    pub lambda: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln mean_error` against `ln n`.
    pub loglog_slope: Option<f64>,
}

pub const RATE_CSV_HEADER: &str = "n,h,lambda,mean_error,std_error";

impl RateReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RATE_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.n, r.h, r.lambda, r.mean_error, r.std_error));
        }
        out
    }
}

impl RateExperimentConfig {
    pub fn validate(&self) -> Result<(), DevlabError> {
        if self.n_values.len() < 2 || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_values must hold at least two strictly increasing values");
        }
        if self.n_values[0] < 2 {
            return invalid("n_values must be at least 2");
        }
        if self.replicates == 0 {
            return invalid("replicates must be positive");
        }
        if !(self.churn_fraction > 0.0) {
            return invalid("churn_fraction must be positive");
        }
        if !(self.lambda_scale >= 0.0) || !(self.bandwidth_scale > 0.0) {
            return invalid("lambda_scale must be nonnegative and bandwidth_scale positive");
        }
        if !(0.0..=1.0).contains(&self.t0) {
            return invalid("t0 must lie in [0, 1]");
        }
        let mut probe = self.trajectory.clone();
        probe.steps = self.n_values[0];
        probe.churn_period = self.period(self.n_values[0]);
        probe.validate()?;
        Ok(())
    }

    fn period(&self, n: usize) -> usize {
        ((self.churn_fraction * n as f64).round() as usize).max(1)
    }
}

/// Error `‖Θ̂_n(t₀) − Θ(t₀)‖_F` averaged over replicates, for each `n`.
///
/// Replicate `r` uses the same graph seed for every `n`, so all sample sizes
/// estimate the same curve `Θ(t)`; data seeds differ across `(n, r)`.
pub fn frobenius_rate(config: &RateExperimentConfig) -> Result<RateReport, DevlabError> {
    config.validate()?;
    let solver = Glasso::new(SolverOptions::default());
    let mut rows = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let h = bandwidth_rule(n, config.bandwidth_scale);
        let lambda = rate_lambda(n, config.lambda_scale);
        let penalty = PenaltySpec::new(lambda, config.penalize_diagonal)?;
        let spec = KernelSpec::new(config.kernel, h)?;
        let errors = (0..config.replicates)
            .into_par_iter()
            .map(|r| -> Result<f64, DevlabError> {
                let mut traj_config = config.trajectory.clone();
                traj_config.steps = n;
                traj_config.churn_period = config.period(n);
                traj_config.seed = derive_seed(config.seed, r as u64);
                let trajectory = generate_trajectory(&traj_config)?;
                let data = sample_data(&trajectory, derive_seed(derive_seed(config.seed, n as u64), r as u64));
                let s_hat = smoothed_covariance(&data, config.t0, &spec)?;
                let fit = solver.fit(&s_hat, penalty)?;
                let truth = &trajectory.thetas[trajectory.nearest_step(config.t0)];
                Ok(fit.theta.matrix().frobenius_distance(truth.matrix()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = errors.len() as f64;
        let mean_error = errors.iter().sum::<f64>() / m;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        rows.push(RateRow {
            n,
            h,
            lambda,
            mean_error,
            std_error: (var / m).sqrt(),
            errors,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mean_error > 0.0)
        .map(|r| ((r.n as f64).ln(), r.mean_error.ln()))
        .unzip();
    let loglog_slope = least_squares(&xs, &ys).map(|(s, _)| s);
    Ok(RateReport { rows, loglog_slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> SymmetricMatrix {
        SymmetricMatrix::from_diagonal(&[v]).unwrap()
    }

    #[test]
    fn mgf_closed_forms() {
        assert_eq!(mgf_product_normals(0.0, 1.3, 0.7, 0.4).unwrap(), 1.0);
        let v = mgf_product_normals(0.5, 1.0, 1.0, 0.0).unwrap();
        assert!((v - 0.75_f64.powf(-0.5)).abs() < 1e-15);
        assert!((v - 1.154_701).abs() < 1e-6);
    }

    #[test]
    fn mgf_domain() {
        assert!(matches!(mgf_product_normals(1.0, 1.0, 1.0, 0.0), Err(DevlabError::OutOfDomain { .. })));
        assert!(matches!(mgf_product_normals(0.5, 1.0, 1.0, 1.0), Err(DevlabError::OutOfDomain { .. })));
        assert!(matches!(mgf_product_normals(-2.5, 1.0, 1.0, 0.5), Err(DevlabError::OutOfDomain { .. })));
        assert!(matches!(mgf_product_normals(0.1, -1.0, 1.0, 0.0), Err(DevlabError::InvalidConfig(_))));
        assert!(matches!(mgf_product_normals(0.1, 1.0, 1.0, 1.5), Err(DevlabError::InvalidConfig(_))));
    }

    #[test]
    fn mgf_monte_carlo_agrees() {
        let exact = mgf_product_normals(0.4, 1.0, 1.0, 0.5).unwrap();
        let mc = mgf_monte_carlo(0.4, 1.0, 1.0, 0.5, 200_000, 1);
        assert_eq!(mc.draws, 200_000);
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "{mc:?} vs {exact}");
    }

    #[test]
    fn bias_zero_for_constant_curve() {
        let curve = MatrixCurve::constant(scalar(2.0));
        for p in bias_curve(&curve, (0, 0), 0.3, KernelFamily::Epanechnikov, &[0.4, 0.2, 0.1], 500).unwrap() {
            assert!(p.abs_bias < 1e-12);
        }
    }

    #[test]
    fn bias_linear_boxcar_at_right_end() {
        // σ(t) = t, one-sided window [1 − h, 1]: mean 1 − h/2.
        let curve = MatrixCurve::polynomial(vec![scalar(0.0), scalar(1.0)]);
        let n = 20_001;
        for p in bias_curve(&curve, (0, 0), 1.0, KernelFamily::Boxcar, &[0.4, 0.2], n).unwrap() {
            assert!((p.bias + p.h / 2.0).abs() < 2.0 / n as f64, "{p:?}");
        }
    }

    #[test]
    fn bias_empty_window() {
        let curve = MatrixCurve::constant(scalar(1.0));
        assert!(matches!(
            bias_curve(&curve, (0, 0), 0.5, KernelFamily::Boxcar, &[1e-6], 10),
            Err(DevlabError::Kernel(KernelError::EmptyWindow { .. }))
        ));
    }

    #[test]
    fn tail_zero_for_huge_epsilon() {
        let r = tail_probability(&TailExperimentConfig {
            epsilon: 100.0,
            replicates: 1000,
            n: 200,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.exceedances, 0);
        assert!((r.expectation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_is_deterministic() {
        let cfg = TailExperimentConfig {
            n: 300,
            replicates: 2000,
            entry: (0, 1),
            covariance: CovarianceSpec::Constant {
                matrix: vec![vec![1.0, 0.5], vec![0.5, 2.0]],
            },
            epsilon: 0.2,
            ..Default::default()
        };
        let a = tail_probability(&cfg).unwrap();
        assert_eq!(a, tail_probability(&cfg).unwrap());
        assert!(a.exceedances > 0 && a.exceedances < a.replicates);
        assert!((a.expectation - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tail_config_validation() {
        let bad = TailExperimentConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(matches!(tail_probability(&bad), Err(DevlabError::InvalidConfig(_))));
        let bad_entry = TailExperimentConfig {
            entry: (0, 5),
            ..Default::default()
        };
        assert!(tail_probability(&bad_entry).is_err());
    }

    #[test]
    fn least_squares_line() {
        let (s, i) = least_squares(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15 && (i - 1.0).abs() < 1e-15);
        assert!(least_squares(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn covariance_spec_json() {
        let spec: CovarianceSpec =
            serde_json::from_str(r#"{"kind":"polynomial","coefficients":[[[1.0]],[[0.5]]]}"#).unwrap();
        let c = spec.curve().unwrap();
        assert!((c.evaluate(0.5).get(0, 0) - 1.25).abs() < 1e-15);
        assert!(serde_json::from_str::<CovarianceSpec>(r#"{"kind":"constant","matrix":[[1.0]],"x":1}"#).is_err());
    }

    #[test]
    fn rate_on_static_graph_shrinks() {
        let cfg = RateExperimentConfig {
            n_values: vec![200, 3200],
            replicates: 4,
            trajectory: EvolutionConfig {
                p: 5,
                steps: 10,
                base_diag: 1.0,
                initial_edges: 3,
                churn_period: 10,
                churn_count: 0,
                weight_range: [0.2, 0.2],
                seed: 0,
            },
            lambda_scale: 0.0,
            ..Default::default()
        };
        let r = frobenius_rate(&cfg).unwrap();
        assert!(r.rows[1].mean_error < r.rows[0].mean_error);
        assert!(r.rows[1].mean_error < 0.5);
    }
}

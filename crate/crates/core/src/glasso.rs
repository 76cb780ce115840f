//! ℓ1-penalized Gaussian log-likelihood (graphical lasso).
//!
//! Solves
//!
//! ```text
//! Θ̂ = argmin_{Θ ≻ 0}  tr(Θ S) − log|Θ| + λ · Σ_{(i,j) penalized} |θ_ij|
//! ```
//!
//! by block coordinate descent on the covariance estimate `W = Θ⁻¹`: each
//! column of `W` is updated by a lasso subproblem solved with cyclic
//! coordinate descent, and `Θ` is read off the lasso coefficients. Lasso
//! soft-thresholding produces exact zeros in `Θ`.
//!
//! Convergence is declared on the KKT residual of the original problem,
//! evaluated at `Θ` with its exact inverse, so a returned fit certifies
//! optimality independently of the solver internals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CovarianceMatrix, EdgeSet, MatrixError, PrecisionMatrix, SymmetricMatrix};

#[derive(Debug, Error, Clone)]
pub enum GlassoError {
    #[error("lambda = 0 requires a strictly positive definite input")]
    SingularInput,
    #[error("diagonal entry {index} of the input is not strictly positive")]
    ZeroDiagonal { index: usize },
    #[error("no convergence after {} iterations (KKT residual {:e})", .best.iterations, .best.kkt_residual)]
    MaxIterationsExceeded { best: Box<GlassoFit> },
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("regularization path must be strictly decreasing and nonnegative")]
    UnsortedPath,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Penalty weight and scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    #[serde(default)]
    pub penalize_diagonal: bool,
}

impl PenaltySpec {
    pub fn new(lambda: f64, penalize_diagonal: bool) -> Result<Self, GlassoError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(GlassoError::InvalidPenalty(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            penalize_diagonal,
        })
    }

    pub fn off_diagonal(lambda: f64) -> Self {
        Self {
            lambda,
            penalize_diagonal: false,
        }
    }

    pub fn penalizes(&self, i: usize, j: usize) -> bool {
        i != j || self.penalize_diagonal
    }

    /// `Σ |θ_ij|` over penalized entries (both triangles).
    pub fn l1_norm(&self, theta: &SymmetricMatrix) -> f64 {
        let p = theta.dim();
        let mut total = 0.0;
        for i in 0..p {
            for j in 0..p {
                if self.penalizes(i, j) {
                    total += theta.get(i, j).abs();
                }
            }
        }
        total
    }
}

/// Solver knobs. `tol` bounds the KKT residual of a converged fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Diagnostic ridge added to the input diagonal. Off by default.
    #[serde(default)]
    pub diagonal_jitter: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            diagonal_jitter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub theta: PrecisionMatrix,
    pub sigma: CovarianceMatrix,
    pub penalty: PenaltySpec,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Objective at the starting iterate.
    pub initial_objective: f64,
    pub converged: bool,
}

impl GlassoFit {
    pub fn l1_norm(&self) -> f64 {
        self.penalty.l1_norm(self.theta.matrix())
    }

    pub fn edges(&self, zero_tol: f64) -> EdgeSet {
        edges_of(&self.theta, zero_tol)
    }
}

/// `tr(Θ S) − log|Θ| + λ · pen(Θ)`.
pub fn objective(s: &SymmetricMatrix, theta: &PrecisionMatrix, penalty: &PenaltySpec) -> f64 {
    theta.matrix().trace_product(s) - theta.log_det() + penalty.lambda * penalty.l1_norm(theta.matrix())
}

const ZERO_ENTRY: f64 = 1e-12;

/// Largest violation of the first-order optimality conditions at `theta`.
pub fn kkt_residual(
    s: &CovarianceMatrix,
    theta: &PrecisionMatrix,
    penalty: &PenaltySpec,
) -> Result<f64, GlassoError> {
    if s.dim() != theta.dim() {
        return Err(MatrixError::DimensionMismatch {
            expected: s.dim(),
            actual: theta.dim(),
        }
        .into());
    }
    let w = theta.matrix().inverse_spd()?;
    Ok(kkt_residual_with_inverse(s.matrix(), theta.matrix(), &w, penalty))
}

fn kkt_residual_with_inverse(
    s: &SymmetricMatrix,
    theta: &SymmetricMatrix,
    w: &SymmetricMatrix,
    penalty: &PenaltySpec,
) -> f64 {
    let p = s.dim();
    let lambda = penalty.lambda;
    let mut worst = 0.0_f64;
    for i in 0..p {
        for j in i..p {
            let g = s.get(i, j) - w.get(i, j);
            let th = theta.get(i, j);
            let r = if !penalty.penalizes(i, j) {
                g.abs()
            } else if th.abs() < ZERO_ENTRY {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * th.signum()).abs()
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Largest absolute off-diagonal entry: the smallest off-diagonal penalty
/// at which the solution is diagonal.
pub fn lambda_max(s: &CovarianceMatrix) -> f64 {
    s.matrix().max_abs_off_diagonal()
}

/// `count` log-spaced values from `lambda_max` down to `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let lo = min_ratio.ln();
            (0..count)
                .map(|k| lambda_max * (lo * k as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Graphical lasso solver.
#[derive(Debug, Clone, Default)]
pub struct Glasso {
    pub options: SolverOptions,
}

impl Glasso {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }

    pub fn fit(&self, s: &CovarianceMatrix, penalty: PenaltySpec) -> Result<GlassoFit, GlassoError> {
        self.solve(s, penalty, None)
    }

    /// Same as [`Glasso::fit`], starting from a previous solution.
    pub fn fit_warm(
        &self,
        s: &CovarianceMatrix,
        penalty: PenaltySpec,
        warm: &GlassoFit,
    ) -> Result<GlassoFit, GlassoError> {
        self.solve(s, penalty, Some(warm))
    }

    fn solve(
        &self,
        s_in: &CovarianceMatrix,
        penalty: PenaltySpec,
        warm: Option<&GlassoFit>,
    ) -> Result<GlassoFit, GlassoError> {
        PenaltySpec::new(penalty.lambda, penalty.penalize_diagonal)?;
        let p = s_in.dim();
        if let Some(w) = warm {
            if w.theta.dim() != p {
                return Err(MatrixError::DimensionMismatch {
                    expected: p,
                    actual: w.theta.dim(),
                }
                .into());
            }
        }
        let s_cov = match self.options.diagonal_jitter {
            Some(j) if j > 0.0 => {
                let ridge = SymmetricMatrix::identity(p).scale(j);
                CovarianceMatrix::from_psd_unchecked(s_in.matrix().add(&ridge))
            }
            _ => s_in.clone(),
        };
        let s = s_cov.matrix();
        let lambda = penalty.lambda;
        let diag_shift = if penalty.penalize_diagonal { lambda } else { 0.0 };

        for i in 0..p {
            if !(s.get(i, i) + diag_shift > 0.0) {
                return Err(GlassoError::ZeroDiagonal { index: i });
            }
        }

        if lambda == 0.0 {
            let theta = s.inverse_spd().map_err(|_| GlassoError::SingularInput)?;
            let theta = PrecisionMatrix::new(theta).map_err(|_| GlassoError::SingularInput)?;
            return Ok(self.finish(&s_cov, theta, penalty, 0, None));
        }

        // W: current covariance estimate. beta: column j holds the lasso
        // coefficients for column j (entry j unused).
        let mut w = DMatrix::<f64>::zeros(p, p);
        let mut beta = DMatrix::<f64>::zeros(p, p);
        match warm {
            Some(prev) => {
                w.copy_from(prev.sigma.matrix().as_matrix());
                let th = prev.theta.matrix();
                for j in 0..p {
                    let tjj = th.get(j, j);
                    for k in 0..p {
                        if k != j {
                            beta[(k, j)] = -th.get(k, j) / tjj;
                        }
                    }
                }
            }
            None => {}
        }
        for i in 0..p {
            w[(i, i)] = s.get(i, i) + diag_shift;
        }
        let initial_theta = match warm {
            Some(prev) => prev.theta.clone(),
            None => PrecisionMatrix::new(
                SymmetricMatrix::from_diagonal(&(0..p).map(|i| 1.0 / w[(i, i)]).collect::<Vec<_>>())?,
            )?,
        };
        let initial_objective = objective(s, &initial_theta, &penalty);

        let tol = self.options.tol;
        let inner_tol = (tol * 1e-3).max(1e-15);
        let mut best: Option<(PrecisionMatrix, f64)> = None;
        let mut grad = vec![0.0; p];

        for iter in 1..=self.options.max_iter.max(1) {
            for j in 0..p {
                // grad = W11 β for the current column.
                for k in 0..p {
                    grad[k] = if k == j {
                        0.0
                    } else {
                        (0..p)
                            .filter(|&l| l != j)
                            .map(|l| w[(k, l)] * beta[(l, j)])
                            .sum()
                    };
                }
                for _sweep in 0..10_000 {
                    let mut max_change = 0.0_f64;
                    for k in 0..p {
                        if k == j {
                            continue;
                        }
                        let wkk = w[(k, k)];
                        let old = beta[(k, j)];
                        let partial = s.get(k, j) - (grad[k] - wkk * old);
                        let new = soft_threshold(partial, lambda) / wkk;
                        let delta = new - old;
                        if delta != 0.0 {
                            beta[(k, j)] = new;
                            for l in 0..p {
                                if l != j {
                                    grad[l] += w[(l, k)] * delta;
                                }
                            }
                            max_change = max_change.max((delta * wkk).abs());
                        }
                    }
                    if max_change < inner_tol {
                        break;
                    }
                }
                for k in 0..p {
                    if k != j {
                        w[(k, j)] = grad[k];
                        w[(j, k)] = grad[k];
                    }
                }
            }

            let Some(theta) = precision_from_blocks(&w, &beta) else {
                continue;
            };
            let inv = theta.matrix().inverse_spd()?;
            let residual = kkt_residual_with_inverse(s, theta.matrix(), &inv, &penalty);
            if best.as_ref().map_or(true, |(_, r)| residual < *r) {
                best = Some((theta.clone(), residual));
            }
            if residual <= tol {
                return Ok(self.finish_with(&s_cov, theta, inv, residual, penalty, iter, initial_objective, true));
            }
        }

        let (theta, residual) = match best {
            Some(b) => b,
            None => (initial_theta, f64::INFINITY),
        };
        let inv = theta.matrix().inverse_spd()?;
        let fit = self.finish_with(
            &s_cov,
            theta,
            inv,
            residual,
            penalty,
            self.options.max_iter,
            initial_objective,
            false,
        );
        Err(GlassoError::MaxIterationsExceeded { best: Box::new(fit) })
    }

    fn finish(
        &self,
        s: &CovarianceMatrix,
        theta: PrecisionMatrix,
        penalty: PenaltySpec,
        iterations: usize,
        initial_objective: Option<f64>,
    ) -> GlassoFit {
        let inv = theta.inverse().into_inner();
        let residual = kkt_residual_with_inverse(s.matrix(), theta.matrix(), &inv, &penalty);
        let obj = objective(s.matrix(), &theta, &penalty);
        GlassoFit {
            sigma: CovarianceMatrix::from_psd_unchecked(inv),
            theta,
            penalty,
            iterations,
            kkt_residual: residual,
            objective: obj,
            initial_objective: initial_objective.unwrap_or(obj),
            converged: true,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_with(
        &self,
        s: &CovarianceMatrix,
        theta: PrecisionMatrix,
        inv: SymmetricMatrix,
        residual: f64,
        penalty: PenaltySpec,
        iterations: usize,
        initial_objective: f64,
        converged: bool,
    ) -> GlassoFit {
        let obj = objective(s.matrix(), &theta, &penalty);
        GlassoFit {
            sigma: CovarianceMatrix::from_psd_unchecked(inv),
            theta,
            penalty,
            iterations,
            kkt_residual: residual,
            objective: obj,
            initial_objective,
            converged,
        }
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

// θ_jj = 1 / (w_jj − w_12ᵀ β_j), θ_{kj} = −β_kj θ_jj, then symmetrized.
fn precision_from_blocks(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> Option<PrecisionMatrix> {
    let p = w.nrows();
    let mut theta = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let dot: f64 = (0..p).filter(|&k| k != j).map(|k| w[(k, j)] * beta[(k, j)]).sum();
        let denom = w[(j, j)] - dot;
        if !(denom > 0.0) {
            return None;
        }
        let tjj = 1.0 / denom;
        theta[(j, j)] = tjj;
        for k in 0..p {
            if k != j {
                theta[(k, j)] = -beta[(k, j)] * tjj;
            }
        }
    }
    let sym = SymmetricMatrix::new(theta).ok()?;
    PrecisionMatrix::new(sym).ok()
}

/// Fits a single penalty with default options apart from `tol` / `max_iter`.
pub fn fit(
    s: &CovarianceMatrix,
    penalty: PenaltySpec,
    tol: f64,
    max_iter: usize,
) -> Result<GlassoFit, GlassoError> {
    Glasso::new(SolverOptions {
        tol,
        max_iter,
        diagonal_jitter: None,
    })
    .fit(s, penalty)
}

/// Warm-started fits along a strictly decreasing `lambdas` grid.
pub fn regularization_path(
    s: &CovarianceMatrix,
    lambdas: &[f64],
    penalize_diagonal: bool,
    options: SolverOptions,
) -> Result<Vec<GlassoFit>, GlassoError> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GlassoError::UnsortedPath);
    }
    let solver = Glasso::new(options);
    let mut fits: Vec<GlassoFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let penalty = PenaltySpec::new(lambda, penalize_diagonal)?;
        let next = match fits.last() {
            Some(prev) => solver.fit_warm(s, penalty, prev)?,
            None => solver.fit(s, penalty)?,
        };
        fits.push(next);
    }
    Ok(fits)
}

/// Edges `(i, j)` with `|θ_ij| > zero_tol`.
pub fn edges_of(theta: &PrecisionMatrix, zero_tol: f64) -> EdgeSet {
    let p = theta.dim();
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if theta.get(i, j).abs() > zero_tol {
                edges.insert(i, j).expect("indices in range");
            }
        }
    }
    edges
}

/// Default edge threshold: `1e-6 · max |θ_ij|`.
pub fn default_zero_tol(theta: &PrecisionMatrix) -> f64 {
    1e-6 * theta.matrix().max_abs()
}

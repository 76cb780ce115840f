//! Estimation of time-varying sparse Gaussian graphical models.
//!
//! The estimator at time `t₀` is the graphical lasso applied to a
//! kernel-smoothed second-moment matrix:
//!
//! ```text
//! Ŝ(t₀) = Σ_s w_s Z_s Z_sᵀ / Σ_s w_s,     w_s = K(|s − t₀| / h)
//! Θ̂(t₀) = argmin_{Θ ≻ 0} tr(Θ Ŝ(t₀)) − log|Θ| + λ |Θ|₁
//! ```
//!
//! Modules:
//! - [`matrix`]: dense symmetric matrices, Cholesky, log-determinant, inverse.
//! - [`kernel`]: smoothing kernels and the weighted covariance.
//! - [`glasso`]: the penalized log-determinant solver and regularization paths.
//! - [`risk`]: predictive/empirical risk, graph loss, precision and recall.
//! - [`simgen`]: evolving sparse precision trajectories and Gaussian sampling.
//! - [`calculus`]: derivatives of `Σ(t) = Θ(t)⁻¹` and their bounds.
//! - [`devlab`]: Monte-Carlo checks of the smoother's bias and tail behaviour.

pub mod calculus;
pub mod data;
pub mod devlab;
pub mod glasso;
pub mod kernel;
pub mod matrix;
pub mod risk;
pub mod rng;
pub mod simgen;

pub use data::TimeSeriesData;
pub use glasso::{Glasso, GlassoError, GlassoFit, PenaltySpec, SolverOptions};
pub use kernel::{KernelFamily, KernelSpec};
pub use matrix::{CovarianceMatrix, EdgeSet, MatrixError, PrecisionMatrix, SymmetricMatrix};

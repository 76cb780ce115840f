//! Derivatives of `Σ(t) = Θ(t)⁻¹` in terms of derivatives of `Θ(t)`:
//!
//! ```text
//! Σ′ = −Σ Θ′ Σ
//! Σ″ =  Σ D Σ,   D = 2 Θ′ Σ Θ′ − Θ″
//! ```
//!
//! plus a grid audit of the entrywise bounds
//! `|σ′_ij| ≤ S₀² √S₁` and `|σ″_ij| ≤ 2 S₀³ S₁ + S₀² S₂`, where
//! `S₀ = max_i sup_t √σ_ii(t)`, `√S₁ = sup_t Σ_kℓ |θ′_kℓ(t)|` and
//! `S₂ = sup_t Σ_kℓ |θ″_kℓ(t)|`. Suprema are taken over the supplied grid only.
//!
//! Those two bounds assume `S₀ ≤ 1`. Since `|σ_ij| ≤ S₀²`, the bounds valid
//! for any `S₀` are `S₀⁴ √S₁` and `2 S₀⁶ S₁ + S₀⁴ S₂`; both are reported.
//! The scalar curve `θ(t) = θ₀ + t` attains them with equality at `t = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::{CovarianceMatrix, MatrixError, SymmetricMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("curve has no analytic derivatives")]
    MissingDerivatives,
    #[error("empty evaluation grid")]
    EmptyGrid,
    #[error("curve is not positive definite at t = {t}")]
    NotPositiveDefinite { t: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

type CurveFn = Arc<dyn Fn(f64) -> SymmetricMatrix + Send + Sync>;

/// Matrix-valued curve on `[0, 1]` with optional analytic derivatives.
#[derive(Clone)]
pub struct MatrixCurve {
    evaluator: CurveFn,
    first: Option<CurveFn>,
    second: Option<CurveFn>,
}

impl fmt::Debug for MatrixCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixCurve")
            .field("first", &self.first.is_some())
            .field("second", &self.second.is_some())
            .finish()
    }
}

impl MatrixCurve {
    pub fn new<F>(evaluator: F) -> Self
    where
        F: Fn(f64) -> SymmetricMatrix + Send + Sync + 'static,
    {
        Self {
            evaluator: Arc::new(evaluator),
            first: None,
            second: None,
        }
    }

    pub fn with_derivatives<F1, F2>(mut self, first: F1, second: F2) -> Self
    where
        F1: Fn(f64) -> SymmetricMatrix + Send + Sync + 'static,
        F2: Fn(f64) -> SymmetricMatrix + Send + Sync + 'static,
    {
        self.first = Some(Arc::new(first));
        self.second = Some(Arc::new(second));
        self
    }

    pub fn constant(m: SymmetricMatrix) -> Self {
        let p = m.dim();
        Self::new(move |_| m.clone()).with_derivatives(move |_| SymmetricMatrix::zeros(p), move |_| SymmetricMatrix::zeros(p))
    }

    /// `Σ_k coeffs[k] · t^k`.
    pub fn polynomial(coeffs: Vec<SymmetricMatrix>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        let p = coeffs[0].dim();
        let coeffs = Arc::new(coeffs);
        let eval = {
            let c = Arc::clone(&coeffs);
            move |t: f64| poly_eval(&c, t, 0, p)
        };
        let d1 = {
            let c = Arc::clone(&coeffs);
            move |t: f64| poly_eval(&c, t, 1, p)
        };
        let d2 = {
            let c = Arc::clone(&coeffs);
            move |t: f64| poly_eval(&c, t, 2, p)
        };
        Self::new(eval).with_derivatives(d1, d2)
    }

    /// Linear interpolation through `(times[k], mats[k])`. The derivative on
    /// `[times[k], times[k+1])` is the segment slope (the last segment also
    /// covers the right end point); the second derivative is zero.
    pub fn piecewise_linear(times: Vec<f64>, mats: Vec<SymmetricMatrix>) -> Self {
        assert_eq!(times.len(), mats.len());
        assert!(!mats.is_empty());
        let p = mats[0].dim();
        let knots = Arc::new((times, mats));
        let eval = {
            let k = Arc::clone(&knots);
            move |t: f64| {
                let (times, mats) = &*k;
                if mats.len() == 1 {
                    return mats[0].clone();
                }
                let s = segment(times, t);
                let w = (t - times[s]) / (times[s + 1] - times[s]);
                mats[s].scale(1.0 - w).add(&mats[s + 1].scale(w))
            }
        };
        let d1 = {
            let k = Arc::clone(&knots);
            move |t: f64| {
                let (times, mats) = &*k;
                if mats.len() == 1 {
                    return SymmetricMatrix::zeros(p);
                }
                let s = segment(times, t);
                mats[s + 1].sub(&mats[s]).scale(1.0 / (times[s + 1] - times[s]))
            }
        };
        Self::new(eval).with_derivatives(d1, move |_| SymmetricMatrix::zeros(p))
    }

    pub fn evaluate(&self, t: f64) -> SymmetricMatrix {
        (self.evaluator)(t)
    }

    pub fn first_derivative(&self, t: f64) -> Option<SymmetricMatrix> {
        self.first.as_ref().map(|f| f(t))
    }

    pub fn second_derivative(&self, t: f64) -> Option<SymmetricMatrix> {
        self.second.as_ref().map(|f| f(t))
    }

    pub fn has_derivatives(&self) -> bool {
        self.first.is_some() && self.second.is_some()
    }
}

fn poly_eval(coeffs: &[SymmetricMatrix], t: f64, order: usize, p: usize) -> SymmetricMatrix {
    let mut acc = DMatrix::<f64>::zeros(p, p);
    for (k, c) in coeffs.iter().enumerate().skip(order) {
        // d^order/dt^order t^k = k!/(k-order)! t^(k-order)
        let falling: f64 = ((k - order + 1)..=k).map(|v| v as f64).product();
        acc += c.as_matrix() * (falling * t.powi((k - order) as i32));
    }
    SymmetricMatrix::symmetrized(acc)
}

fn segment(times: &[f64], t: f64) -> usize {
    let last = times.len() - 2;
    match times.partition_point(|&x| x <= t) {
        0 => 0,
        i => (i - 1).min(last),
    }
}

fn check_dim(expected: usize, m: &SymmetricMatrix) -> Result<(), CalculusError> {
    if m.dim() != expected {
        return Err(CalculusError::DimensionMismatch {
            expected,
            actual: m.dim(),
        });
    }
    Ok(())
}

/// `dΣ/dt = −Σ Θ′ Σ`.
pub fn sigma_dot(sigma: &CovarianceMatrix, theta_dot: &SymmetricMatrix) -> Result<SymmetricMatrix, CalculusError> {
    check_dim(sigma.dim(), theta_dot)?;
    Ok(SymmetricMatrix::sandwich(sigma.matrix(), theta_dot).scale(-1.0))
}

/// `d²Σ/dt² = Σ (2 Θ′ Σ Θ′ − Θ″) Σ`.
pub fn sigma_ddot(
    sigma: &CovarianceMatrix,
    theta_dot: &SymmetricMatrix,
    theta_ddot: &SymmetricMatrix,
) -> Result<SymmetricMatrix, CalculusError> {
    check_dim(sigma.dim(), theta_dot)?;
    check_dim(sigma.dim(), theta_ddot)?;
    let d = SymmetricMatrix::sandwich(theta_dot, sigma.matrix()).scale(2.0).sub(theta_ddot);
    Ok(SymmetricMatrix::sandwich(sigma.matrix(), &d))
}

fn abs_sum(m: &SymmetricMatrix) -> f64 {
    m.as_matrix().iter().map(|v| v.abs()).sum()
}

fn quadruple_sum(m: &SymmetricMatrix) -> f64 {
    let p = m.dim();
    let a = m.as_matrix();
    let mut total = 0.0;
    for k in 0..p {
        for i in 0..p {
            for l in 0..p {
                for j in 0..p {
                    total += (a[(k, i)] * a[(l, j)]).abs();
                }
            }
        }
    }
    total
}

/// Grid audit of the derivative bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub grid_points: usize,
    /// `max_i sup_t √σ_ii(t)`.
    pub s0: f64,
    /// `sup_t (Σ_kℓ |θ′_kℓ(t)|)²`.
    pub s1: f64,
    /// Direct quadruple sum `sup_t Σ_kiℓj |θ′_ki θ′_ℓj|`, computed for `p ≤ 10`.
    pub s1_quadruple: Option<f64>,
    pub s2: f64,
    pub sup_sigma_dot: f64,
    pub sup_sigma_ddot: f64,
    /// `S₀² √S₁`.
    pub bound_first: f64,
    /// `2 S₀³ S₁ + S₀² S₂`.
    pub bound_second: f64,
    /// `S₀⁴ √S₁`.
    pub bound_first_general: f64,
    /// `2 S₀⁶ S₁ + S₀⁴ S₂`.
    pub bound_second_general: f64,
    pub first_holds: bool,
    pub second_holds: bool,
    pub first_general_holds: bool,
    pub second_general_holds: bool,
}

pub const QUADRUPLE_SUM_MAX_DIM: usize = 10;

pub fn smoothness_budget(curve: &MatrixCurve, grid: &[f64]) -> Result<SmoothnessReport, CalculusError> {
    if !curve.has_derivatives() {
        return Err(CalculusError::MissingDerivatives);
    }
    if grid.is_empty() {
        return Err(CalculusError::EmptyGrid);
    }
    let mut s0: f64 = 0.0;
    let mut root_s1: f64 = 0.0;
    let mut s1_quad: f64 = 0.0;
    let mut s2: f64 = 0.0;
    let mut sup1: f64 = 0.0;
    let mut sup2: f64 = 0.0;
    let mut p = 0;
    for &t in grid {
        let theta = curve.evaluate(t);
        p = theta.dim();
        let sigma = theta
            .inverse_spd()
            .map_err(|_| CalculusError::NotPositiveDefinite { t })?;
        let sigma = CovarianceMatrix::from_psd_unchecked(sigma);
        let d1 = curve.first_derivative(t).expect("checked");
        let d2 = curve.second_derivative(t).expect("checked");
        let sd = sigma_dot(&sigma, &d1)?;
        let sdd = sigma_ddot(&sigma, &d1, &d2)?;
        s0 = s0.max(sigma.matrix().diagonal().iter().fold(0.0_f64, |a, v| a.max(v.sqrt())));
        root_s1 = root_s1.max(abs_sum(&d1));
        if p <= QUADRUPLE_SUM_MAX_DIM {
            s1_quad = s1_quad.max(quadruple_sum(&d1));
        }
        s2 = s2.max(abs_sum(&d2));
        sup1 = sup1.max(sd.max_abs());
        sup2 = sup2.max(sdd.max_abs());
    }
    let s1 = root_s1 * root_s1;
    let bound_first = s0 * s0 * root_s1;
    let bound_second = 2.0 * s0.powi(3) * s1 + s0 * s0 * s2;
    let bound_first_general = s0.powi(4) * root_s1;
    let bound_second_general = 2.0 * s0.powi(6) * s1 + s0.powi(4) * s2;
    // Relative slack for rounding in the equality cases (e.g. p = 1).
    let slack = |b: f64| b * (1.0 + 1e-12) + 1e-300;
    Ok(SmoothnessReport {
        grid_points: grid.len(),
        s0,
        s1,
        s1_quadruple: (p <= QUADRUPLE_SUM_MAX_DIM).then_some(s1_quad),
        s2,
        sup_sigma_dot: sup1,
        sup_sigma_ddot: sup2,
        bound_first,
        bound_second,
        bound_first_general,
        bound_second_general,
        first_holds: sup1 <= slack(bound_first),
        second_holds: sup2 <= slack(bound_second),
        first_general_holds: sup1 <= slack(bound_first_general),
        second_general_holds: sup2 <= slack(bound_second_general),
    })
}

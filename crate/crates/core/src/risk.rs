//! Evaluation functionals for fitted graphs: predictive and empirical risk,
//! symmetric-difference graph loss, precision / recall, and the oracle fit
//! that replaces the smoothed covariance by the true one.

use serde::Serialize;
use thiserror::Error;

use crate::glasso::{Glasso, GlassoError, GlassoFit, PenaltySpec};
use crate::matrix::{CovarianceMatrix, EdgeSet, MatrixError, PrecisionMatrix};
use crate::simgen::EdgeEvent;

#[derive(Debug, Error, Clone)]
pub enum RiskError {
    #[error("edge sets have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Glasso(#[from] GlassoError),
}

/// `R(Σ) = tr(Σ⁻¹ Σ₀) + log|Σ|`.
pub fn predictive_risk(sigma: &CovarianceMatrix, sigma0: &CovarianceMatrix) -> Result<f64, RiskError> {
    check_dims(sigma.dim(), sigma0.dim())?;
    let chol = sigma.matrix().cholesky()?;
    let inv = chol.inverse();
    Ok(inv.trace_product(sigma0.matrix()) + chol.log_det())
}

/// `R(Θ⁻¹)` evaluated from the precision matrix directly: `tr(Θ Σ₀) − log|Θ|`.
pub fn predictive_risk_of_precision(theta: &PrecisionMatrix, sigma0: &CovarianceMatrix) -> Result<f64, RiskError> {
    check_dims(theta.dim(), sigma0.dim())?;
    Ok(theta.matrix().trace_product(sigma0.matrix()) - theta.log_det())
}

/// `R̂(Σ) = tr(Σ⁻¹ Ŝ) + log|Σ|`; same formula with the smoothed covariance.
pub fn empirical_risk(sigma: &CovarianceMatrix, s_hat: &CovarianceMatrix) -> Result<f64, RiskError> {
    predictive_risk(sigma, s_hat)
}

fn check_dims(a: usize, b: usize) -> Result<(), RiskError> {
    if a != b {
        return Err(RiskError::DimensionMismatch(a, b));
    }
    Ok(())
}

/// `|F Δ F̂|`.
pub fn graph_loss(f_true: &EdgeSet, f_est: &EdgeSet) -> Result<usize, RiskError> {
    check_dims(f_true.dim(), f_est.dim())?;
    let common = f_true.intersection_count(f_est);
    Ok(f_true.len() + f_est.len() - 2 * common)
}

/// Precision `|F̂ ∩ F| / |F̂|` and recall `|F̂ ∩ F| / |F|`; `None` when the
/// denominator set is empty.
pub fn precision_recall(f_true: &EdgeSet, f_est: &EdgeSet) -> Result<(Option<f64>, Option<f64>), RiskError> {
    check_dims(f_true.dim(), f_est.dim())?;
    let common = f_true.intersection_count(f_est) as f64;
    let precision = (!f_est.is_empty()).then(|| common / f_est.len() as f64);
    let recall = (!f_true.is_empty()).then(|| common / f_true.len() as f64);
    Ok((precision, recall))
}

/// Graphical lasso on the true covariance.
pub fn oracle_fit(sigma0: &CovarianceMatrix, penalty: PenaltySpec, solver: &Glasso) -> Result<GlassoFit, RiskError> {
    Ok(solver.fit(sigma0, penalty)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub lambda: f64,
    pub l1_norm: f64,
    pub edge_count: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub predictive_risk: Option<f64>,
    pub empirical_risk: f64,
}

impl RiskReport {
    /// Builds the report for a fit. Truth-dependent fields are `None` when
    /// `truth` is absent.
    pub fn evaluate(
        fit: &GlassoFit,
        s_hat: &CovarianceMatrix,
        zero_tol: f64,
        truth: Option<(&CovarianceMatrix, &EdgeSet)>,
    ) -> Result<Self, RiskError> {
        let est_edges = fit.edges(zero_tol);
        let empirical = predictive_risk_of_precision(&fit.theta, s_hat)?;
        let (precision, recall, predictive) = match truth {
            Some((sigma0, f_true)) => {
                let (pr, rc) = precision_recall(f_true, &est_edges)?;
                let risk = predictive_risk_of_precision(&fit.theta, sigma0)?;
                (pr, rc, Some(risk))
            }
            None => (None, None, None),
        };
        Ok(Self {
            lambda: fit.penalty.lambda,
            l1_norm: fit.l1_norm(),
            edge_count: est_edges.len(),
            precision,
            recall,
            predictive_risk: predictive,
            empirical_risk: empirical,
        })
    }

    pub const CSV_HEADER: &'static str = "lambda,l1_norm,edge_count,precision,recall,predictive_risk,empirical_risk";

    /// One CSV row; undefined values are empty cells.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.lambda,
            self.l1_norm,
            self.edge_count,
            opt_cell(self.precision),
            opt_cell(self.recall),
            opt_cell(self.predictive_risk),
            self.empirical_risk
        )
    }
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One `(ℓ1, risk)` point on a regularization path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub l1_norm: f64,
    pub predictive_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub empirical: PathPoint,
    pub oracle: PathPoint,
}

impl MatchedPair {
    pub fn oracle_wins(&self) -> bool {
        self.oracle.predictive_risk <= self.empirical.predictive_risk
    }
}

/// Pairs each empirical point with the oracle point of nearest ℓ1 norm,
/// keeping pairs whose relative ℓ1 distance is at most `rel_tol`.
pub fn match_by_l1(empirical: &[PathPoint], oracle: &[PathPoint], rel_tol: f64) -> Vec<MatchedPair> {
    empirical
        .iter()
        .filter_map(|e| {
            let o = oracle
                .iter()
                .min_by(|a, b| (a.l1_norm - e.l1_norm).abs().total_cmp(&(b.l1_norm - e.l1_norm).abs()))?;
            let scale = e.l1_norm.abs().max(o.l1_norm.abs());
            let close = if scale == 0.0 {
                true
            } else {
                (o.l1_norm - e.l1_norm).abs() / scale <= rel_tol
            };
            close.then_some(MatchedPair {
                empirical: *e,
                oracle: *o,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Removed,
}

impl ChangeKind {
    pub fn name(self) -> &'static str {
        match self {
            ChangeKind::Added => "added",
            ChangeKind::Removed => "removed",
        }
    }
}

/// When a churned edge shows up in (or drops out of) a sequence of estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeLatency {
    pub i: usize,
    pub j: usize,
    pub kind: ChangeKind,
    /// First nonzero step for added edges, decay start for removed ones.
    pub true_change_step: usize,
    /// Death step of removed edges, if reached.
    pub true_death_step: Option<usize>,
    /// Evaluated step from which the estimate agrees with the change for good.
    pub detected_step: Option<usize>,
}

impl EdgeLatency {
    pub fn latency(&self) -> Option<usize> {
        self.detected_step.map(|d| d - self.true_change_step)
    }

    pub const CSV_HEADER: &'static str = "i,j,kind,true_change_step,true_death_step,detected_step,latency";

    pub fn csv_row(&self) -> String {
        let cell = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.i,
            self.j,
            self.kind.name(),
            self.true_change_step,
            cell(self.true_death_step),
            cell(self.detected_step),
            cell(self.latency())
        )
    }
}

// First step of the final run of agreeing evaluations, if the run is nonempty.
fn settled_step(window: &[(usize, bool)]) -> Option<usize> {
    let tail = window.iter().rev().take_while(|(_, agrees)| *agrees).count();
    (tail > 0).then(|| window[window.len() - tail].0)
}

/// Detection steps for every churned edge. `estimates[k]` is the estimated
/// edge set at step `eval_steps[k]`; `eval_steps` must be increasing.
///
/// An added edge is detected at the first evaluation from which it stays in
/// the estimate for the rest of its life; a removed edge at the first
/// evaluation from which it stays out until the end. Flickers before that
/// point do not count.
pub fn edge_latencies(events: &[EdgeEvent], eval_steps: &[usize], estimates: &[EdgeSet]) -> Vec<EdgeLatency> {
    assert_eq!(eval_steps.len(), estimates.len());
    let mut rows = Vec::new();
    for e in events {
        if e.is_added() {
            let start = e.first_nonzero_step();
            let end = e.death_step.unwrap_or(usize::MAX);
            let window: Vec<(usize, bool)> = eval_steps
                .iter()
                .zip(estimates)
                .filter(|(&k, _)| k >= start && k < end)
                .map(|(&k, set)| (k, set.contains(e.i, e.j)))
                .collect();
            let detected = settled_step(&window);
            rows.push(EdgeLatency {
                i: e.i,
                j: e.j,
                kind: ChangeKind::Added,
                true_change_step: start,
                true_death_step: None,
                detected_step: detected,
            });
        }
        if let Some(start) = e.decay_start {
            let window: Vec<(usize, bool)> = eval_steps
                .iter()
                .zip(estimates)
                .filter(|(&k, _)| k >= start)
                .map(|(&k, set)| (k, !set.contains(e.i, e.j)))
                .collect();
            let detected = settled_step(&window);
            rows.push(EdgeLatency {
                i: e.i,
                j: e.j,
                kind: ChangeKind::Removed,
                true_change_step: start,
                true_death_step: e.death_step,
                detected_step: detected,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymmetricMatrix;

    fn edges(dim: usize, pairs: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn risk_at_truth() {
        let id = CovarianceMatrix::identity(4);
        assert!((predictive_risk(&id, &id).unwrap() - 4.0).abs() < 1e-14);
        let s0 = CovarianceMatrix::new(SymmetricMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap();
        let expected = 2.0 + (2.0_f64 - 0.25).ln();
        assert!((predictive_risk(&s0, &s0).unwrap() - expected).abs() < 1e-12);
        let id2 = CovarianceMatrix::identity(2);
        assert_eq!(empirical_risk(&s0, &id2).unwrap(), predictive_risk(&s0, &id2).unwrap());
    }

    #[test]
    fn risk_requires_pd() {
        let singular = CovarianceMatrix::new(SymmetricMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap()).unwrap();
        assert!(matches!(
            predictive_risk(&singular, &CovarianceMatrix::identity(2)),
            Err(RiskError::Matrix(MatrixError::NotPositiveDefinite))
        ));
    }

    #[test]
    fn graph_loss_examples() {
        let a = edges(4, &[(0, 1)]);
        assert_eq!(graph_loss(&a, &a).unwrap(), 0);
        assert_eq!(graph_loss(&a, &edges(4, &[(0, 1), (1, 2)])).unwrap(), 1);
        assert_eq!(graph_loss(&edges(4, &[(0, 1), (2, 3)]), &EdgeSet::empty(4)).unwrap(), 2);
        assert!(matches!(
            graph_loss(&a, &EdgeSet::empty(3)),
            Err(RiskError::DimensionMismatch(4, 3))
        ));
    }

    #[test]
    fn precision_recall_examples() {
        let f = edges(4, &[(0, 1), (1, 2)]);
        assert_eq!(precision_recall(&f, &f).unwrap(), (Some(1.0), Some(1.0)));
        assert_eq!(
            precision_recall(&f, &edges(4, &[(0, 1), (2, 3)])).unwrap(),
            (Some(0.5), Some(0.5))
        );
        assert_eq!(precision_recall(&f, &EdgeSet::empty(4)).unwrap(), (None, Some(0.0)));
        assert_eq!(precision_recall(&EdgeSet::empty(4), &f).unwrap(), (Some(0.0), None));
    }

    #[test]
    fn csv_row_leaves_undefined_cells_empty() {
        let r = RiskReport {
            lambda: 0.5,
            l1_norm: 0.0,
            edge_count: 0,
            precision: None,
            recall: Some(0.0),
            predictive_risk: None,
            empirical_risk: 3.25,
        };
        assert_eq!(r.csv_row(), "0.5,0,0,,0,,3.25");
    }

    #[test]
    fn latencies_track_truth() {
        let events = vec![
            EdgeEvent { i: 0, j: 1, weight: 0.2, birth_step: 0, decay_start: Some(0), death_step: Some(4), initial: true },
            EdgeEvent { i: 2, j: 3, weight: 0.2, birth_step: 0, decay_start: None, death_step: None, initial: false },
        ];
        let steps = [0, 2, 4, 6];
        let sets = [edges(4, &[(0, 1)]), edges(4, &[(0, 1)]), edges(4, &[(2, 3)]), edges(4, &[(2, 3)])];
        let rows = edge_latencies(&events, &steps, &sets);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].kind, rows[0].detected_step, rows[0].latency()), (ChangeKind::Removed, Some(4), Some(4)));
        assert_eq!((rows[1].kind, rows[1].true_change_step, rows[1].detected_step), (ChangeKind::Added, 1, Some(4)));
        assert_eq!(rows[1].csv_row(), "2,3,added,1,,4,3");

        // A flicker that reverts does not count as detection.
        let sets = [edges(4, &[]), edges(4, &[(0, 1)]), edges(4, &[]), edges(4, &[])];
        let rows = edge_latencies(&events[..1], &steps, &sets);
        assert_eq!(rows[0].detected_step, Some(4));
    }

    #[test]
    fn matching_respects_tolerance() {
        let pt = |l1: f64, r: f64| PathPoint {
            lambda: 0.0,
            l1_norm: l1,
            predictive_risk: r,
        };
        let emp = [pt(1.0, 5.0), pt(2.0, 4.0), pt(10.0, 3.0)];
        let ora = [pt(1.02, 4.9), pt(2.5, 3.9)];
        let pairs = match_by_l1(&emp, &ora, 0.05);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].oracle.l1_norm, 1.02);
        assert!(pairs[0].oracle_wins());
    }
}

//! Dense symmetric matrices and the numerical primitives shared by every
//! estimator in the crate.
//!
//! Storage is a plain `nalgebra::DMatrix<f64>`; the newtypes below carry the
//! structural guarantees (exact symmetry, finiteness, PSD / PD) so that the
//! solvers downstream never need to re-check them.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix must have at least one row")]
    Empty,
}

/// Dense `p × p` symmetric matrix with finite entries.
///
/// Symmetry is enforced at construction by replacing the input with
/// `(m + mᵀ) / 2`, so `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MatrixError> {
        if m.nrows() != m.ncols() {
            return Err(MatrixError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(MatrixError::Empty);
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite);
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds from a row-major slice of length `p * p`.
    pub fn from_row_major(p: usize, entries: &[f64]) -> Result<Self, MatrixError> {
        if entries.len() != p * p {
            return Err(MatrixError::DimensionMismatch {
                expected: p * p,
                actual: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(p, p, entries))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        let p = rows.len();
        let mut flat = Vec::with_capacity(p * p);
        for row in rows {
            if row.len() != p {
                return Err(MatrixError::NotSquare {
                    rows: p,
                    cols: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_major(p, &flat)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            data: DMatrix::identity(p, p),
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            data: DMatrix::zeros(p, p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, MatrixError> {
        let p = diag.len();
        let mut m = DMatrix::zeros(p, p);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        Self::new(m)
    }

    // Averages with the transpose; skips validation.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Self { data: m }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)]).collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let p = self.dim();
        let mut out = Vec::with_capacity(p * p);
        for i in 0..p {
            for j in 0..p {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        self.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute off-diagonal entry (0 for `p = 1`).
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        let mut best = 0.0_f64;
        for i in 0..p {
            for j in (i + 1)..p {
                best = best.max(self.data[(i, j)].abs());
            }
        }
        best
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &SymmetricMatrix) -> f64 {
        // Both symmetric, so tr(AB) = Σ_ij a_ij b_ij.
        self.data.component_mul(&other.data).sum()
    }

    pub fn max_abs_diff(&self, other: &SymmetricMatrix) -> f64 {
        (&self.data - &other.data)
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_distance(&self, other: &SymmetricMatrix) -> f64 {
        (&self.data - &other.data).norm()
    }

    pub fn cholesky(&self) -> Result<CholeskyFactor, MatrixError> {
        CholeskyFactor::new(self)
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.data.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(self.data.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    pub fn log_det_spd(&self) -> Result<f64, MatrixError> {
        Ok(self.cholesky()?.log_det())
    }

    pub fn inverse_spd(&self) -> Result<SymmetricMatrix, MatrixError> {
        Ok(self.cholesky()?.inverse())
    }

    pub fn scale(&self, factor: f64) -> SymmetricMatrix {
        Self {
            data: &self.data * factor,
        }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        Self {
            data: &self.data - &other.data,
        }
    }

    /// `a · b · a` for symmetric `a`, `b`; the result is symmetric.
    pub fn sandwich(a: &SymmetricMatrix, b: &SymmetricMatrix) -> SymmetricMatrix {
        Self::symmetrized(&a.data * &b.data * &a.data)
    }
}

impl fmt::Display for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.data)
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = m`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn new(m: &SymmetricMatrix) -> Result<Self, MatrixError> {
        let p = m.dim();
        let a = m.as_matrix();
        let mut l = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(MatrixError::NotPositiveDefinite);
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..p {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let p = self.dim();
        let l = &self.lower;
        for i in 0..p {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = b[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// `(L Lᵀ)⁻¹`, symmetrized after the column solves.
    pub fn inverse(&self) -> SymmetricMatrix {
        let p = self.dim();
        let mut inv = DMatrix::<f64>::zeros(p, p);
        let mut col = vec![0.0; p];
        for j in 0..p {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..p {
                inv[(i, j)] = col[i];
            }
        }
        SymmetricMatrix::symmetrized(inv)
    }

    /// `L · v`.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        (0..p)
            .map(|i| (0..=i).map(|k| self.lower[(i, k)] * v[k]).sum())
            .collect()
    }
}

/// Symmetric positive semidefinite matrix (smallest eigenvalue at least
/// `-1e-10 · max diagonal`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(SymmetricMatrix);

pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-10;

impl CovarianceMatrix {
    pub fn new(m: SymmetricMatrix) -> Result<Self, MatrixError> {
        let (min, _) = m.eigen_extremes();
        let tol = PSD_RELATIVE_TOLERANCE * m.max_abs_diagonal();
        if min < -tol {
            return Err(MatrixError::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Self(m))
    }

    // For matrices that are PSD by construction (sums of outer products).
    pub(crate) fn from_psd_unchecked(m: SymmetricMatrix) -> Self {
        Self(m)
    }

    pub fn identity(p: usize) -> Self {
        Self(SymmetricMatrix::identity(p))
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SymmetricMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Inverts a strictly positive definite covariance.
    pub fn to_precision(&self) -> Result<PrecisionMatrix, MatrixError> {
        let inv = self.0.inverse_spd()?;
        PrecisionMatrix::new(inv)
    }
}

/// Strictly positive definite matrix (Cholesky succeeds).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix(SymmetricMatrix);

impl PrecisionMatrix {
    pub fn new(m: SymmetricMatrix) -> Result<Self, MatrixError> {
        m.cholesky()?;
        Ok(Self(m))
    }

    pub fn identity(p: usize) -> Self {
        Self(SymmetricMatrix::identity(p))
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SymmetricMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn cholesky(&self) -> CholeskyFactor {
        CholeskyFactor::new(&self.0).expect("precision matrix is positive definite")
    }

    pub fn log_det(&self) -> f64 {
        self.cholesky().log_det()
    }

    pub fn inverse(&self) -> CovarianceMatrix {
        CovarianceMatrix(self.cholesky().inverse())
    }
}

pub fn cholesky(m: &SymmetricMatrix) -> Result<CholeskyFactor, MatrixError> {
    CholeskyFactor::new(m)
}

pub fn log_det(m: &PrecisionMatrix) -> f64 {
    m.log_det()
}

pub fn spd_inverse(m: &PrecisionMatrix) -> CovarianceMatrix {
    m.inverse()
}

pub fn eigen_extremes(m: &SymmetricMatrix) -> (f64, f64) {
    m.eigen_extremes()
}

/// Undirected edge set over vertices `0..dim`; pairs stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    dim: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdgeError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {index} out of range for dimension {dim}")]
    OutOfRange { index: usize, dim: usize },
}

impl EdgeSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self, EdgeError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = Self::empty(dim);
        for (i, j) in pairs {
            set.insert(i, j)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool, EdgeError> {
        if i == j {
            return Err(EdgeError::SelfLoop(i));
        }
        for index in [i, j] {
            if index >= self.dim {
                return Err(EdgeError::OutOfRange {
                    index,
                    dim: self.dim,
                });
            }
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn intersection_count(&self, other: &EdgeSet) -> usize {
        self.edges.intersection(&other.edges).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let s = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0])).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(1, 0), 3.0);
    }

    #[test]
    fn construction_rejects_nan_and_non_square() {
        assert_eq!(
            SymmetricMatrix::new(DMatrix::from_row_slice(1, 1, &[f64::NAN])),
            Err(MatrixError::NonFinite)
        );
        assert!(matches!(
            SymmetricMatrix::new(DMatrix::zeros(2, 3)),
            Err(MatrixError::NotSquare { .. })
        ));
    }

    #[test]
    fn cholesky_identity() {
        let c = cholesky(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(c.lower(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let c = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let l = c.lower();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_indefinite_fails() {
        assert_eq!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err(),
            MatrixError::NotPositiveDefinite
        );
    }

    #[test]
    fn log_det_examples() {
        let id = PrecisionMatrix::identity(5);
        assert_eq!(log_det(&id), 0.0);
        let d = PrecisionMatrix::new(SymmetricMatrix::from_diagonal(&[2.0, 2.0]).unwrap()).unwrap();
        assert!((log_det(&d) - 2.0 * 2.0_f64.ln()).abs() < 1e-15);
        let a = PrecisionMatrix::new(m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert!((log_det(&a) - 8.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn inverse_examples() {
        let id = PrecisionMatrix::identity(4);
        assert_eq!(spd_inverse(&id).matrix(), &SymmetricMatrix::identity(4));
        let d = PrecisionMatrix::new(SymmetricMatrix::from_diagonal(&[2.0, 4.0]).unwrap()).unwrap();
        let inv = spd_inverse(&d);
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn eigen_extremes_examples() {
        let (lo, hi) = eigen_extremes(&SymmetricMatrix::from_diagonal(&[1.0, 3.0, 2.0]).unwrap());
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
        let (lo, hi) = eigen_extremes(&m(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_rejects_indefinite() {
        assert!(matches!(
            CovarianceMatrix::new(m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(MatrixError::NotPositiveSemidefinite { .. })
        ));
        // Rank-deficient PSD is fine.
        assert!(CovarianceMatrix::new(m(&[&[1.0, 1.0], &[1.0, 1.0]])).is_ok());
    }

    #[test]
    fn edge_set_rules() {
        let mut e = EdgeSet::empty(3);
        assert!(e.insert(2, 0).unwrap());
        assert!(!e.insert(0, 2).unwrap());
        assert!(e.contains(0, 2));
        assert_eq!(e.insert(1, 1), Err(EdgeError::SelfLoop(1)));
        assert!(matches!(e.insert(0, 3), Err(EdgeError::OutOfRange { .. })));
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![(0, 2)]);
    }
}

//! Time-indexed observations of a `p`-vector.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("observation matrix has {rows} rows but {times} time stamps were given")]
    LengthMismatch { rows: usize, times: usize },
    #[error("time {0} lies outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite value in observations")]
    NonFinite,
    #[error("data set is empty")]
    Empty,
}

/// `n` observations `Z_k ∈ ℝᵖ` with time stamps `t_k ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    observations: DMatrix<f64>,
    times: Vec<f64>,
}

impl TimeSeriesData {
    /// `observations` is `n × p`, one row per time stamp.
    pub fn new(observations: DMatrix<f64>, times: Vec<f64>) -> Result<Self, DataError> {
        if observations.nrows() == 0 || observations.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if observations.nrows() != times.len() {
            return Err(DataError::LengthMismatch {
                rows: observations.nrows(),
                times: times.len(),
            });
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        for (k, t) in times.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(DataError::TimeOutOfRange(*t));
            }
            if k > 0 && times[k - 1] >= *t {
                return Err(DataError::NotIncreasing(k));
            }
        }
        Ok(Self {
            observations,
            times,
        })
    }

    /// Observations on the default grid `t_k = k / (n - 1)`.
    pub fn on_uniform_grid(observations: DMatrix<f64>) -> Result<Self, DataError> {
        let n = observations.nrows();
        Self::new(observations, uniform_grid(n))
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn p(&self) -> usize {
        self.observations.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.observations.row(k).iter().copied().collect()
    }
}

/// `k / (n - 1)` for `k = 0..n`; a single point sits at 0.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let denom = (n - 1) as f64;
            (0..n).map(|k| k as f64 / denom).collect()
        }
    }
}

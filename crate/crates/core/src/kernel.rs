//! Compactly supported smoothing kernels and the kernel-weighted second-moment
//! estimator `Ŝ(t₀) = Σ_s w_s Z_s Z_sᵀ / Σ_s w_s`.
//!
//! All kernels vanish outside `[-1, 1]`. Weights are normalized by their
//! realized sum on the observation grid, so they carry exactly unit mass
//! regardless of how the window is truncated at the ends of `[0, 1]`.
//! Observations are not centered: the model is zero-mean.
//!
//! A local-linear smoother would slot in next to [`smoothed_covariance`] and
//! reuse [`smoothing_weights`]; it is not provided.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeriesData;
use crate::matrix::{CovarianceMatrix, SymmetricMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("no observation within bandwidth {bandwidth} of t0 = {t0}")]
    EmptyWindow { t0: f64, bandwidth: f64 },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Boxcar,
    Epanechnikov,
    #[default]
    TruncatedGaussian,
}

impl KernelFamily {
    pub fn value(self, v: f64) -> f64 {
        if !(v.abs() <= 1.0) {
            return 0.0;
        }
        match self {
            KernelFamily::Boxcar => 0.5,
            KernelFamily::Epanechnikov => 0.75 * (1.0 - v * v),
            KernelFamily::TruncatedGaussian => (-0.5 * v * v).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Boxcar => "boxcar",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::TruncatedGaussian => "truncated_gaussian",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boxcar" => Ok(KernelFamily::Boxcar),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "truncated_gaussian" | "gaussian" => Ok(KernelFamily::TruncatedGaussian),
            other => Err(KernelError::UnknownFamily(other.to_string())),
        }
    }
}

/// Kernel family plus bandwidth `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self, KernelError> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(KernelError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn value(&self, v: f64) -> f64 {
        self.family.value(v)
    }
}

/// Bandwidth rule `h = scale · n^{-1/3}`; the experiments use `scale = 5.848`.
pub fn bandwidth_rule(n: usize, scale: f64) -> f64 {
    scale / (n as f64).cbrt()
}

pub const DEFAULT_BANDWIDTH_SCALE: f64 = 5.848;

pub fn kernel_value(spec: &KernelSpec, v: f64) -> f64 {
    spec.value(v)
}

/// Normalized weights `w_k ∝ K((t_k - t₀) / h)`, summing to one.
pub fn smoothing_weights(spec: &KernelSpec, times: &[f64], t0: f64) -> Result<Vec<f64>, KernelError> {
    let h = spec.bandwidth;
    let mut weights: Vec<f64> = times.iter().map(|t| spec.value((t - t0) / h)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(KernelError::EmptyWindow { t0, bandwidth: h });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Kernel-weighted second-moment matrix at `t0`.
pub fn smoothed_covariance(
    data: &TimeSeriesData,
    t0: f64,
    spec: &KernelSpec,
) -> Result<CovarianceMatrix, KernelError> {
    let weights = smoothing_weights(spec, data.times(), t0)?;
    Ok(weighted_second_moment(data.observations(), &weights))
}

pub(crate) fn weighted_second_moment(obs: &DMatrix<f64>, weights: &[f64]) -> CovarianceMatrix {
    let p = obs.ncols();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let row = obs.row(k);
        for i in 0..p {
            let wi = w * row[i];
            for j in i..p {
                acc[(i, j)] += wi * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            acc[(i, j)] = acc[(j, i)];
        }
    }
    CovarianceMatrix::from_psd_unchecked(SymmetricMatrix::symmetrized(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::uniform_grid;
    use proptest::prelude::*;

    fn spec(family: KernelFamily, h: f64) -> KernelSpec {
        KernelSpec::new(family, h).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_value(&spec(KernelFamily::Boxcar, 1.0), 0.3), 0.5);
        assert_eq!(kernel_value(&spec(KernelFamily::Epanechnikov, 1.0), 0.0), 0.75);
        for fam in [
            KernelFamily::Boxcar,
            KernelFamily::Epanechnikov,
            KernelFamily::TruncatedGaussian,
        ] {
            assert_eq!(fam.value(1.5), 0.0);
            assert_eq!(fam.value(-1.5), 0.0);
            assert_eq!(fam.value(0.4), fam.value(-0.4));
        }
        assert_eq!(KernelFamily::TruncatedGaussian.value(1.0), (-0.5_f64).exp());
    }

    #[test]
    fn wide_boxcar_is_uniform() {
        let times = uniform_grid(7);
        let w = smoothing_weights(&spec(KernelFamily::Boxcar, 1.0), &times, 1.0).unwrap();
        for wk in w {
            assert!((wk - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_at_default_bandwidth() {
        let n = 200;
        let h = bandwidth_rule(n, DEFAULT_BANDWIDTH_SCALE);
        assert!((h - 1.0).abs() < 1e-5);
        let times = uniform_grid(n);
        let w = smoothing_weights(&spec(KernelFamily::TruncatedGaussian, h), &times, 1.0).unwrap();
        // h is a hair below 1, so only t = 0 falls outside the window.
        assert!(h < 1.0);
        assert_eq!(w[0], 0.0);
        assert!(w[1..].iter().all(|&x| x > 0.0));
        assert!(w[1..].windows(2).all(|p| p[0] < p[1]));
        let v = (times[1] - 1.0) / h;
        assert!((w[1] / w[n - 1] - (-0.5 * v * v).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_window() {
        let err = smoothing_weights(&spec(KernelFamily::Boxcar, 0.001), &[0.0, 0.5, 1.0], 0.25);
        assert!(matches!(err, Err(KernelError::EmptyWindow { .. })));
    }

    #[test]
    fn single_observation() {
        let obs = DMatrix::from_row_slice(1, 2, &[2.0, -3.0]);
        let data = TimeSeriesData::new(obs, vec![0.4]).unwrap();
        let s = smoothed_covariance(&data, 0.4, &spec(KernelFamily::Boxcar, 0.1)).unwrap();
        assert_eq!(s.get(0, 0), 4.0);
        assert_eq!(s.get(0, 1), -6.0);
        assert_eq!(s.get(1, 1), 9.0);
    }

    #[test]
    fn wide_boxcar_matches_plain_second_moment() {
        let obs = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let data = TimeSeriesData::on_uniform_grid(obs.clone()).unwrap();
        let s = smoothed_covariance(&data, 1.0, &spec(KernelFamily::Boxcar, 1.0)).unwrap();
        let plain = obs.transpose() * &obs / 3.0;
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.get(i, j) - plain[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn boxcar_locality_uses_last_points_only() {
        // n = 11 grid with spacing 0.1; h = 0.25 covers t ∈ {0.8, 0.9, 1.0}.
        let obs = DMatrix::from_fn(11, 2, |r, c| (r as f64 + 1.0) * if c == 0 { 1.0 } else { -0.5 });
        let data = TimeSeriesData::on_uniform_grid(obs.clone()).unwrap();
        let s = smoothed_covariance(&data, 1.0, &spec(KernelFamily::Boxcar, 0.25)).unwrap();
        let tail = obs.rows(8, 3).into_owned();
        let plain = tail.transpose() * &tail / 3.0;
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.get(i, j) - plain[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_family() {
        assert_eq!("boxcar".parse::<KernelFamily>().unwrap(), KernelFamily::Boxcar);
        assert!("triangle".parse::<KernelFamily>().is_err());
    }

    fn family_strategy() -> impl Strategy<Value = KernelFamily> {
        prop_oneof![
            Just(KernelFamily::Boxcar),
            Just(KernelFamily::Epanechnikov),
            Just(KernelFamily::TruncatedGaussian),
        ]
    }

    proptest! {
        #[test]
        fn weights_have_unit_mass(
            family in family_strategy(),
            n in 2usize..300,
            h in 0.05f64..1.5,
            t0 in 0.0f64..1.0,
        ) {
            let times = uniform_grid(n);
            if let Ok(w) = smoothing_weights(&spec(family, h), &times, t0) {
                let total: f64 = w.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(w.iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn smoothed_covariance_is_psd(
            family in family_strategy(),
            h in 0.1f64..1.0,
            t0 in 0.0f64..1.0,
            entries in proptest::collection::vec(-5.0f64..5.0, 3 * 20),
        ) {
            let obs = DMatrix::from_row_slice(20, 3, &entries);
            let data = TimeSeriesData::on_uniform_grid(obs).unwrap();
            let s = smoothed_covariance(&data, t0, &spec(family, h)).unwrap();
            prop_assert!(CovarianceMatrix::new(s.into_inner()).is_ok());
        }
    }
}

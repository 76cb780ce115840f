//! `devlab` subcommands. Each writes `<name>.csv` and a `<name>.json`
//! summary of the form `{config, statistics, fitted}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tvgraph::devlab::{
    frobenius_rate, mgf_monte_carlo, mgf_product_normals, run_bias, tail_grid, BiasExperimentConfig, BiasReport,
    RateExperimentConfig, RateReport, TailGridConfig, TailGridReport, MIN_TAIL_REPLICATES,
};

use crate::config::{write_json, write_output};
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct Summary<'a, C: Serialize, S: Serialize, F: Serialize> {
    config: &'a C,
    statistics: S,
    fitted: F,
}

fn emit<C: Serialize, S: Serialize, F: Serialize>(
    out: &Path,
    name: &str,
    csv: &str,
    config: &C,
    statistics: S,
    fitted: F,
) -> Result<(), CliError> {
    write_output(out, &format!("{name}.csv"), csv.as_bytes())?;
    write_json(
        out,
        &format!("{name}.json"),
        &Summary {
            config,
            statistics,
            fitted,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgfConfig {
    pub t_values: Vec<f64>,
    pub sigma_i: f64,
    pub sigma_j: f64,
    pub rho: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for MgfConfig {
    fn default() -> Self {
        Self {
            t_values: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            sigma_i: 1.0,
            sigma_j: 1.0,
            rho: 0.5,
            draws: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfRow {
    pub t: f64,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// `(mc_mean − closed_form) / mc_std_error`; 0 when the error is 0.
    pub z_score: f64,
}

pub fn run_mgf(config: &MgfConfig, out: &Path) -> Result<Vec<MgfRow>, CliError> {
    if config.draws < 2 {
        return Err(CliError::config("draws must be at least 2"));
    }
    let rows = config
        .t_values
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let closed_form = mgf_product_normals(t, config.sigma_i, config.sigma_j, config.rho)?;
            let mc = mgf_monte_carlo(
                t,
                config.sigma_i,
                config.sigma_j,
                config.rho,
                config.draws,
                tvgraph::rng::derive_seed(config.seed, k as u64),
            );
            let z_score = if mc.std_error > 0.0 {
                (mc.mean - closed_form) / mc.std_error
            } else {
                0.0
            };
            Ok(MgfRow {
                t,
                closed_form,
                mc_mean: mc.mean,
                mc_std_error: mc.std_error,
                z_score,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = String::from("t,closed_form,mc_mean,mc_std_error,z_score\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.t, r.closed_form, r.mc_mean, r.mc_std_error, r.z_score));
    }
    let max_abs_z = rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max);
    #[derive(Serialize)]
    struct Stats<'a> {
        rows: &'a [MgfRow],
        max_abs_z: f64,
    }
    emit(
        out,
        "mgf",
        &csv,
        config,
        Stats {
            rows: &rows,
            max_abs_z,
        },
        serde_json::Value::Null,
    )?;
    Ok(rows)
}

pub fn run_bias_cmd(config: &BiasExperimentConfig, out: &Path) -> Result<BiasReport, CliError> {
    let report = run_bias(config)?;
    emit(out, "bias", &report.to_csv(), config, &report.points, &report.ratios)?;
    Ok(report)
}

pub fn run_tail_cmd(config: &TailGridConfig, out: &Path) -> Result<TailGridReport, CliError> {
    let report = tail_grid(config)?;
    #[derive(Serialize)]
    struct Stats<'a> {
        rows: &'a [tvgraph::devlab::TailResult],
        monotone_fraction: f64,
        enough_replicates: bool,
    }
    emit(
        out,
        "tail",
        &report.to_csv(),
        config,
        Stats {
            rows: &report.rows,
            monotone_fraction: report.monotone_fraction,
            enough_replicates: config.replicates >= MIN_TAIL_REPLICATES,
        },
        report.envelope,
    )?;
    Ok(report)
}

pub fn run_rate_cmd(config: &RateExperimentConfig, out: &Path) -> Result<RateReport, CliError> {
    let report = frobenius_rate(config)?;
    #[derive(Serialize)]
    struct Fitted {
        loglog_slope: Option<f64>,
    }
    emit(
        out,
        "rate",
        &report.to_csv(),
        config,
        &report.rows,
        Fitted {
            loglog_slope: report.loglog_slope,
        },
    )?;
    Ok(report)
}

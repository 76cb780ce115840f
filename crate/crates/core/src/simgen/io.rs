//! File formats for trajectories and sampled data.
//!
//! Trajectory: JSON lines, one record per step,
//! `{"step":k,"t":t_k,"p":p,"base_diag":b,"edges":[[i,j,weight],...]}` with
//! only nonzero-weight edges listed. Data: CSV with header `t,z1,…,zp` and
//! shortest round-trip float formatting, so a write/read cycle is lossless.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{precision_from_weights, EdgeEvent, GraphTrajectory, WeightedEdge};
use crate::data::{DataError, TimeSeriesData};
use crate::matrix::{CovarianceMatrix, EdgeSet, MatrixError, PrecisionMatrix};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub p: usize,
    pub base_diag: f64,
    pub edges: Vec<(usize, usize, f64)>,
}

impl StepRecord {
    pub fn weighted_edges(&self) -> Vec<WeightedEdge> {
        self.edges.iter().map(|&(i, j, weight)| WeightedEdge { i, j, weight }).collect()
    }

    pub fn precision(&self) -> Result<PrecisionMatrix, FormatError> {
        Ok(PrecisionMatrix::new(precision_from_weights(self.p, self.base_diag, &self.weighted_edges()))?)
    }

    pub fn covariance(&self) -> Result<CovarianceMatrix, FormatError> {
        Ok(self.precision()?.inverse())
    }

    pub fn edge_set(&self) -> EdgeSet {
        let mut set = EdgeSet::empty(self.p);
        for &(i, j, w) in &self.edges {
            if w > 0.0 {
                let _ = set.insert(i, j);
            }
        }
        set
    }
}

pub fn trajectory_records(trajectory: &GraphTrajectory) -> Vec<StepRecord> {
    trajectory
        .weights
        .iter()
        .enumerate()
        .map(|(k, ws)| StepRecord {
            step: k,
            t: trajectory.times[k],
            p: trajectory.p(),
            base_diag: trajectory.config.base_diag,
            edges: ws.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        })
        .collect()
}

pub fn write_trajectory_jsonl<W: Write>(trajectory: &GraphTrajectory, mut out: W) -> Result<(), FormatError> {
    for record in trajectory_records(trajectory) {
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory_jsonl<R: BufRead>(input: R) -> Result<Vec<StepRecord>, FormatError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StepRecord = serde_json::from_str(&line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
        if record.step != records.len() {
            return Err(parse_err(idx + 1, format!("expected step {}, found {}", records.len(), record.step)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(parse_err(0, "trajectory file has no records"));
    }
    Ok(records)
}

/// Recovers edge life cycles from per-step weights.
///
/// Each maximal run of nonzero weight is one event. A run that starts after
/// step 0 was ramped in from the preceding step; a run that ends before the
/// last step died on the following step. A run that died, or whose final
/// weight is below its maximum, is decaying; the decay started at the last
/// step where the weight still equals that maximum. `weight` is the largest observed weight,
/// which falls short of the target for ramps cut off by the end of the record.
pub fn events_from_records(records: &[StepRecord]) -> Vec<EdgeEvent> {
    use std::collections::BTreeMap;
    let last = records.len().saturating_sub(1);
    let mut series: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        for &(i, j, w) in &r.edges {
            if w > 0.0 {
                series.entry((i.min(j), i.max(j))).or_default().push((r.step, w));
            }
        }
    }
    let mut events = Vec::new();
    for ((i, j), points) in series {
        let mut start = 0;
        while start < points.len() {
            let mut end = start;
            while end + 1 < points.len() && points[end + 1].0 == points[end].0 + 1 {
                end += 1;
            }
            let run = &points[start..=end];
            let first = run[0].0;
            let stop = run[run.len() - 1].0;
            let peak = run.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            let died = stop < last;
            let decaying = died || run[run.len() - 1].1 < peak;
            let decay_start = decaying.then(|| run.iter().filter(|x| x.1 == peak).map(|x| x.0).max().unwrap_or(first));
            events.push(EdgeEvent {
                i,
                j,
                weight: peak,
                birth_step: if first == 0 { 0 } else { first - 1 },
                decay_start,
                death_step: died.then_some(stop + 1),
                initial: first == 0,
            });
            start = end + 1;
        }
    }
    events.sort_by_key(|e| (e.birth_step, e.i, e.j));
    events
}

pub fn write_data_csv<W: Write>(data: &TimeSeriesData, mut out: W) -> Result<(), FormatError> {
    let mut header = String::from("t");
    for c in 1..=data.p() {
        header.push_str(&format!(",z{c}"));
    }
    writeln!(out, "{header}")?;
    let obs = data.observations();
    for (k, t) in data.times().iter().enumerate() {
        let mut line = t.to_string();
        for c in 0..data.p() {
            line.push(',');
            line.push_str(&obs[(k, c)].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_data_csv<R: BufRead>(input: R) -> Result<TimeSeriesData, FormatError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first().map(|c| c.trim()) != Some("t") || cols.len() < 2 {
        return Err(parse_err(1, "header must be t,z1,...,zp"));
    }
    for (c, name) in cols.iter().enumerate().skip(1) {
        if name.trim() != format!("z{c}") {
            return Err(parse_err(1, format!("unexpected column `{name}`")));
        }
    }
    let p = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != p + 1 {
            return Err(parse_err(idx + 2, format!("expected {} fields, found {}", p + 1, fields.len())));
        }
        let mut parsed = fields
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(idx + 2, e.to_string())));
        times.push(parsed.next().expect("nonempty")?);
        for v in parsed {
            values.push(v?);
        }
    }
    let n = times.len();
    Ok(TimeSeriesData::new(DMatrix::from_row_slice(n, p, &values), times)?)
}

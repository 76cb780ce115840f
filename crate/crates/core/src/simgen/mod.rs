//! Smoothly evolving sparse precision matrices and Gaussian sampling along
//! them.
//!
//! The precision at every step is `base_diag · I + L(w)`, where `L(w)` is the
//! weighted graph Laplacian of the currently active edges: an edge `(i, j)`
//! with weight `a` subtracts `a` from `θ_ij, θ_ji` and adds `a` to `θ_ii, θ_jj`.
//! Since a weighted Laplacian is PSD, `λ_min(Θ) ≥ base_diag` at every step.
//!
//! Every `churn_period` steps (starting at step 0) `churn_count` full-weight
//! edges start a linear decay to zero and `churn_count` fresh pairs start a
//! linear ramp up to a new uniform weight, both spanning `churn_period`
//! steps. Edges that change in the same direction during a window never
//! share a vertex, which keeps every entry's per-step change at most
//! `weight_high / churn_period` (diagonal entries included).

pub mod io;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::MatrixCurve;
use crate::data::{uniform_grid, TimeSeriesData};
use crate::matrix::{EdgeSet, PrecisionMatrix, SymmetricMatrix};
use crate::rng::{self, Domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimgenError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub p: usize,
    pub steps: usize,
    pub base_diag: f64,
    pub initial_edges: usize,
    pub churn_period: usize,
    pub churn_count: usize,
    pub weight_range: [f64; 2],
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            p: 50,
            steps: 200,
            base_diag: 0.25,
            initial_edges: 50,
            churn_period: 200,
            churn_count: 5,
            weight_range: [0.1, 0.3],
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), SimgenError> {
        let bad = |msg: String| Err(SimgenError::ConfigInvalid(msg));
        let pairs = self.p * self.p.saturating_sub(1) / 2;
        let [low, high] = self.weight_range;
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if !(self.base_diag > 0.0) || !self.base_diag.is_finite() {
            return bad(format!("base_diag must be positive, got {}", self.base_diag));
        }
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return bad(format!("weight range must satisfy 0 < low <= high, got [{low}, {high}]"));
        }
        if self.initial_edges > pairs {
            return bad(format!("initial_edges {} exceeds the {pairs} available pairs", self.initial_edges));
        }
        if self.churn_count > self.initial_edges {
            return bad("churn_count must not exceed initial_edges".into());
        }
        if self.churn_count > 0 {
            if self.churn_period == 0 {
                return bad("churn_period must be positive".into());
            }
            if 2 * self.churn_count > self.p {
                return bad("churn_count edges per direction must fit on disjoint vertices (2·churn_count ≤ p)".into());
            }
            if self.initial_edges + self.churn_count > pairs {
                return bad("not enough free pairs for churn".into());
            }
        }
        Ok(())
    }

    /// Bound on the per-step change of any entry of `Θ`.
    pub fn max_step_change(&self) -> f64 {
        if self.churn_count == 0 {
            0.0
        } else {
            self.weight_range[1] / self.churn_period as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Life cycle of one edge occurrence.
///
/// Added edges have `birth_step` at the churn boundary where their ramp
/// starts (weight 0 there). Removed edges have `decay_start` at the boundary
/// where their decay starts and `death_step` where the weight reaches 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub i: usize,
    pub j: usize,
    /// Full (target) weight of the edge.
    pub weight: f64,
    pub birth_step: usize,
    pub decay_start: Option<usize>,
    pub death_step: Option<usize>,
    /// Present at full weight from step 0.
    pub initial: bool,
}

impl EdgeEvent {
    pub fn is_added(&self) -> bool {
        !self.initial
    }

    pub fn is_removed(&self) -> bool {
        self.decay_start.is_some()
    }

    /// First step with nonzero weight.
    pub fn first_nonzero_step(&self) -> usize {
        if self.initial {
            self.birth_step
        } else {
            self.birth_step + 1
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphTrajectory {
    pub config: EvolutionConfig,
    pub thetas: Vec<PrecisionMatrix>,
    pub edge_sets: Vec<EdgeSet>,
    pub times: Vec<f64>,
    /// Nonzero edge weights per step, sorted by `(i, j)`.
    pub weights: Vec<Vec<WeightedEdge>>,
    events: Vec<EdgeEvent>,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Full,
    Ramping { start: usize },
    Decaying { start: usize },
}

#[derive(Debug, Clone, Copy)]
struct ActiveEdge {
    target: f64,
    phase: Phase,
    event: usize,
}

impl ActiveEdge {
    fn weight_at(&self, k: usize, period: usize) -> f64 {
        match self.phase {
            Phase::Full => self.target,
            Phase::Ramping { start } => self.target * (k - start) as f64 / period as f64,
            Phase::Decaying { start } => self.target * (1.0 - (k - start) as f64 / period as f64),
        }
    }
}

const DISJOINT_ATTEMPTS: usize = 256;

// Uniformly shuffled greedy pick of `count` vertex-disjoint pairs.
fn pick_disjoint<R: Rng>(rng: &mut R, candidates: &[(usize, usize)], count: usize, p: usize) -> Option<Vec<(usize, usize)>> {
    let mut pool = candidates.to_vec();
    for _ in 0..DISJOINT_ATTEMPTS {
        pool.shuffle(rng);
        let mut used = vec![false; p];
        let mut picked = Vec::with_capacity(count);
        for &(i, j) in &pool {
            if !used[i] && !used[j] {
                used[i] = true;
                used[j] = true;
                picked.push((i, j));
                if picked.len() == count {
                    return Some(picked);
                }
            }
        }
    }
    None
}

fn uniform_weight<R: Rng>(rng: &mut R, [low, high]: [f64; 2]) -> f64 {
    if low == high {
        low
    } else {
        rng.random_range(low..=high)
    }
}

pub fn precision_from_weights(p: usize, base_diag: f64, edges: &[WeightedEdge]) -> SymmetricMatrix {
    let mut m = DMatrix::<f64>::identity(p, p) * base_diag;
    for e in edges {
        m[(e.i, e.j)] -= e.weight;
        m[(e.j, e.i)] -= e.weight;
        m[(e.i, e.i)] += e.weight;
        m[(e.j, e.j)] += e.weight;
    }
    SymmetricMatrix::symmetrized(m)
}

pub fn generate_trajectory(config: &EvolutionConfig) -> Result<GraphTrajectory, SimgenError> {
    config.validate()?;
    let p = config.p;
    let period = config.churn_period.max(1);
    let mut rng = rng::stream(config.seed, Domain::Graph, 0);

    let all_pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).collect();
    let mut active: BTreeMap<(usize, usize), ActiveEdge> = BTreeMap::new();
    let mut events: Vec<EdgeEvent> = Vec::new();

    let initial = rand::seq::index::sample(&mut rng, all_pairs.len(), config.initial_edges);
    let mut initial: Vec<(usize, usize)> = initial.iter().map(|ix| all_pairs[ix]).collect();
    initial.sort_unstable();
    for (i, j) in initial {
        let weight = uniform_weight(&mut rng, config.weight_range);
        events.push(EdgeEvent {
            i,
            j,
            weight,
            birth_step: 0,
            decay_start: None,
            death_step: None,
            initial: true,
        });
        active.insert(
            (i, j),
            ActiveEdge {
                target: weight,
                phase: Phase::Full,
                event: events.len() - 1,
            },
        );
    }

    let times = uniform_grid(config.steps);
    let mut thetas = Vec::with_capacity(config.steps);
    let mut edge_sets = Vec::with_capacity(config.steps);
    let mut weights = Vec::with_capacity(config.steps);

    for k in 0..config.steps {
        // Complete the ramps that started one period ago.
        active.retain(|_, e| match e.phase {
            Phase::Decaying { start } if k - start == period => {
                events[e.event].death_step = Some(k);
                false
            }
            _ => true,
        });
        for e in active.values_mut() {
            if let Phase::Ramping { start } = e.phase {
                if k - start == period {
                    e.phase = Phase::Full;
                }
            }
        }

        let boundary = config.churn_count > 0 && k % period == 0 && k + 1 < config.steps;
        if boundary {
            let full: Vec<(usize, usize)> = active
                .iter()
                .filter(|(_, e)| matches!(e.phase, Phase::Full))
                .map(|(pair, _)| *pair)
                .collect();
            let dying = pick_disjoint(&mut rng, &full, config.churn_count, p).ok_or_else(|| {
                SimgenError::ConfigInvalid(format!("step {k}: cannot pick {} vertex-disjoint edges to remove", config.churn_count))
            })?;
            let free: Vec<(usize, usize)> = all_pairs.iter().copied().filter(|pair| !active.contains_key(pair)).collect();
            let mut born = pick_disjoint(&mut rng, &free, config.churn_count, p).ok_or_else(|| {
                SimgenError::ConfigInvalid(format!("step {k}: cannot pick {} vertex-disjoint edges to add", config.churn_count))
            })?;
            for pair in dying {
                let e = active.get_mut(&pair).expect("picked from active set");
                e.phase = Phase::Decaying { start: k };
                events[e.event].decay_start = Some(k);
            }
            born.sort_unstable();
            for (i, j) in born {
                let weight = uniform_weight(&mut rng, config.weight_range);
                events.push(EdgeEvent {
                    i,
                    j,
                    weight,
                    birth_step: k,
                    decay_start: None,
                    death_step: None,
                    initial: false,
                });
                active.insert(
                    (i, j),
                    ActiveEdge {
                        target: weight,
                        phase: Phase::Ramping { start: k },
                        event: events.len() - 1,
                    },
                );
            }
        }

        let step_weights: Vec<WeightedEdge> = active
            .iter()
            .map(|(&(i, j), e)| WeightedEdge {
                i,
                j,
                weight: e.weight_at(k, period),
            })
            .filter(|e| e.weight > 0.0)
            .collect();
        let theta = precision_from_weights(p, config.base_diag, &step_weights);
        let theta = PrecisionMatrix::new(theta).expect("base_diag·I plus a weighted Laplacian is positive definite");
        let edges = EdgeSet::from_pairs(p, step_weights.iter().map(|e| (e.i, e.j))).expect("valid pairs");
        thetas.push(theta);
        edge_sets.push(edges);
        weights.push(step_weights);
    }

    Ok(GraphTrajectory {
        config: config.clone(),
        thetas,
        edge_sets,
        times,
        weights,
        events,
    })
}

impl GraphTrajectory {
    pub fn steps(&self) -> usize {
        self.thetas.len()
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn edge_events(&self) -> &[EdgeEvent] {
        &self.events
    }

    /// Step whose time stamp is closest to `t`.
    pub fn nearest_step(&self, t: f64) -> usize {
        nearest_index(&self.times, t)
    }

    /// Piecewise-linear interpolation of `Θ(t)` between steps, with its
    /// exact (one-sided on segment boundaries) first derivative and zero
    /// second derivative.
    pub fn precision_curve(&self) -> MatrixCurve {
        MatrixCurve::piecewise_linear(self.times.clone(), self.thetas.iter().map(|t| t.matrix().clone()).collect())
    }
}

pub fn nearest_index(times: &[f64], t: f64) -> usize {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

pub fn edge_events(trajectory: &GraphTrajectory) -> &[EdgeEvent] {
    trajectory.edge_events()
}

/// Draws row `k` independently from `N(0, Θ_k⁻¹)` using a per-step stream.
pub fn sample_data(trajectory: &GraphTrajectory, seed: u64) -> TimeSeriesData {
    let p = trajectory.p();
    let rows: Vec<Vec<f64>> = trajectory
        .thetas
        .par_iter()
        .enumerate()
        .map(|(k, theta)| {
            let sigma = theta.inverse();
            let chol = sigma.matrix().cholesky().expect("covariance of a PD precision is PD");
            let mut rng = rng::stream(seed, Domain::Sample, k as u64);
            let u: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            chol.mul_lower(&u)
        })
        .collect();
    let n = rows.len();
    let obs = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
    TimeSeriesData::new(obs, trajectory.times.clone()).expect("grid times are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(churn: usize) -> EvolutionConfig {
        EvolutionConfig {
            p: 8,
            steps: 60,
            base_diag: 0.5,
            initial_edges: 6,
            churn_period: 20,
            churn_count: churn,
            weight_range: [0.1, 0.3],
            seed: 11,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small(1);
        c.base_diag = 0.0;
        assert!(generate_trajectory(&c).is_err());
        let mut c = small(1);
        c.weight_range = [0.3, 0.1];
        assert!(generate_trajectory(&c).is_err());
        let mut c = small(1);
        c.initial_edges = 29;
        assert!(generate_trajectory(&c).is_err());
        let mut c = small(1);
        c.churn_count = 7;
        assert!(generate_trajectory(&c).is_err());
    }

    #[test]
    fn no_churn_is_constant() {
        let t = generate_trajectory(&small(0)).unwrap();
        assert!(t.thetas.iter().all(|th| th == &t.thetas[0]));
        assert!(t.edge_events().iter().all(|e| e.initial && e.birth_step == 0 && e.death_step.is_none()));
        assert_eq!(t.edge_events().len(), 6);
    }

    #[test]
    fn churn_bookkeeping() {
        let t = generate_trajectory(&small(2)).unwrap();
        assert_eq!(t.edge_sets[0].len(), 6);
        for k in 1..60 {
            let inside = k % 20 != 0;
            let expected = if inside { 8 } else { 6 };
            assert_eq!(t.edge_sets[k].len(), expected, "step {k}");
        }
        let added: Vec<_> = t.edge_events().iter().filter(|e| e.is_added()).collect();
        assert_eq!(added.len(), 6);
        assert!(added.iter().all(|e| e.birth_step % 20 == 0));
        for e in t.edge_events().iter().filter(|e| e.is_removed()) {
            let start = e.decay_start.unwrap();
            if let Some(d) = e.death_step {
                assert_eq!(d, start + 20);
            }
        }
    }

    #[test]
    fn single_step_snapshot() {
        let mut c = small(0);
        c.steps = 1;
        let t = generate_trajectory(&c).unwrap();
        assert_eq!(t.steps(), 1);
        let d = sample_data(&t, 3);
        assert_eq!(d.n(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = generate_trajectory(&small(2)).unwrap();
        let a = sample_data(&t, 5);
        let b = sample_data(&t, 5);
        assert_eq!(a, b);
        assert_ne!(a, sample_data(&t, 6));
    }

    #[test]
    fn graph_sequence_is_independent_of_length() {
        let mut long = small(2);
        long.steps = 100;
        let a = generate_trajectory(&small(2)).unwrap();
        let b = generate_trajectory(&long).unwrap();
        for k in 0..59 {
            assert_eq!(a.weights[k], b.weights[k]);
        }
    }
}

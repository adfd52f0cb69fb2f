//! Random models, row perturbations and parameter distances.
//!
//! Used by the optimistic search (candidate sampling), by the experiment
//! harness (estimation error reporting) and by the property tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::model::PomdpModel;
use crate::scalar::{l1_distance, l2_distance, Real};
use crate::spectral::project_row;

/// Norm used to measure a row perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNorm {
    L1,
    L2,
}

/// How the perturbation magnitude relates to the radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMode {
    /// Magnitude drawn uniformly from `[0, radius]`.
    Within,
    /// Magnitude exactly `radius` (before projection back onto the simplex).
    OnBoundary,
}

/// A row `min_entry + (1 - n min_entry) * Dirichlet(1, ..., 1)`.
pub fn random_stochastic_row<R: Rng + ?Sized>(rng: &mut R, n: usize, min_entry: f64) -> Vec<f64> {
    assert!(
        min_entry * n as f64 <= 1.0,
        "min_entry too large for {n} entries"
    );
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let free = 1.0 - min_entry * n as f64;
    let mut row: Vec<f64> = e.iter().map(|x| min_entry + free * x / s).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

fn random_stochastic<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    min_entry: f64,
) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(rows, cols);
    for r in 0..rows {
        for (c, x) in random_stochastic_row(rng, cols, min_entry)
            .into_iter()
            .enumerate()
        {
            m[(r, c)] = T::lit(x);
        }
    }
    m
}

/// Random model with transition entries at least `min_transition` and
/// observation entries at least `min_obs`; rewards uniform on `[0, r_max]`.
pub fn random_model<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    num_obs: usize,
    min_transition: f64,
    min_obs: f64,
    r_max: f64,
) -> PomdpModel<T> {
    let transitions = (0..num_actions)
        .map(|_| random_stochastic(rng, num_states, num_states, min_transition))
        .collect();
    let observations = (0..num_actions)
        .map(|_| random_stochastic(rng, num_states, num_obs, min_obs))
        .collect();
    let rewards = DMatrix::from_fn(num_states, num_actions, |_, _| {
        T::lit(r_max * rng.random::<f64>())
    });
    PomdpModel::new(transitions, observations, rewards, T::lit(r_max))
        .expect("random model is stochastic by construction")
}

/// Random zero-sum direction of unit norm.
fn zero_sum_direction<R: Rng + ?Sized>(rng: &mut R, n: usize, norm: RowNorm) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / n as f64;
        let d: Vec<f64> = g.iter().map(|x| x - mean).collect();
        let size = match norm {
            RowNorm::L1 => d.iter().map(|x| x.abs()).sum::<f64>(),
            RowNorm::L2 => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        if size > 1e-12 {
            return d.into_iter().map(|x| x / size).collect();
        }
    }
}

/// Moves every row by a random zero-sum vector of the given norm, then clips
/// to `[floor, 1]` and renormalizes.
pub fn perturb_rows<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    matrix: &DMatrix<T>,
    radius: f64,
    norm: RowNorm,
    mode: RadiusMode,
    floor: f64,
) -> DMatrix<T> {
    let mut out = matrix.clone();
    let n = matrix.ncols();
    if n < 2 {
        return out;
    }
    for r in 0..matrix.nrows() {
        let magnitude = match mode {
            RadiusMode::Within => radius * rng.random::<f64>(),
            RadiusMode::OnBoundary => radius,
        };
        let d = zero_sum_direction(rng, n, norm);
        let mut row: Vec<T> = (0..n)
            .map(|c| matrix[(r, c)] + T::lit(magnitude * d[c]))
            .collect();
        project_row(&mut row, T::lit(floor)).expect("zero-sum move keeps positive mass");
        for (c, x) in row.into_iter().enumerate() {
            out[(r, c)] = x;
        }
    }
    out
}

/// Row-wise distances between the dynamics of two models with equal shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ParameterDistance<T: Real> {
    /// `max_{m,i} ||P_i(m,:) - P'_i(m,:)||_1`
    pub transition_l1: T,
    /// `max_{m,i} ||P_i(m,:) - P'_i(m,:)||_2`
    pub transition_l2: T,
    /// `max_{m,i} ||Omega(.|m,i) - Omega'(.|m,i)||_1`
    pub observation_l1: T,
    /// `max_{m,i} sum_{n,o} |P_i(m,n) Omega(o|n,i) - P'_i(m,n) Omega'(o|n,i)|`
    pub joint: T,
}

impl<T: Real> ParameterDistance<T> {
    /// Sum of the transition and observation max-row L1 errors.
    pub fn combined_l1(&self) -> T {
        self.transition_l1 + self.observation_l1
    }
}

fn max_row_distance<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>], norm: RowNorm) -> T {
    let mut best = T::zero();
    for (x, y) in a.iter().zip(b) {
        for r in 0..x.nrows() {
            let xr: Vec<T> = x.row(r).iter().copied().collect();
            let yr: Vec<T> = y.row(r).iter().copied().collect();
            let d = match norm {
                RowNorm::L1 => l1_distance(&xr, &yr),
                RowNorm::L2 => l2_distance(&xr, &yr),
            };
            best = best.max(d);
        }
    }
    best
}

pub fn parameter_distance<T: Real>(a: &PomdpModel<T>, b: &PomdpModel<T>) -> ParameterDistance<T> {
    let mut joint = T::zero();
    for i in 0..a.num_actions() {
        let (pa, pb) = (a.transition(i), b.transition(i));
        let (wa, wb) = (a.observation(i), b.observation(i));
        for m in 0..a.num_states() {
            let mut s = T::zero();
            for n in 0..a.num_states() {
                for o in 0..a.num_obs() {
                    s += (pa[(m, n)] * wa[(n, o)] - pb[(m, n)] * wb[(n, o)]).abs();
                }
            }
            joint = joint.max(s);
        }
    }
    ParameterDistance {
        transition_l1: max_row_distance(a.transitions(), b.transitions(), RowNorm::L1),
        transition_l2: max_row_distance(a.transitions(), b.transitions(), RowNorm::L2),
        observation_l1: max_row_distance(a.observations(), b.observations(), RowNorm::L1),
        joint,
    }
}

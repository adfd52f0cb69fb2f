//! Spectral estimation of transition and observation matrices from
//! exploration data.

mod constants;
mod moments;
mod tensor;

use std::path::Path;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::truncated_pinv;
use crate::model::PomdpModel;
use crate::scalar::Real;

pub use constants::{spectral_constants, SpectralConstants};
pub use moments::{
    build_views, empirical_moments, moments_from_joint, population_joint, population_moments,
    MomentSet, ViewBatch,
};
pub use tensor::{tensor_decompose, Decomposition, PowerConfig, Tensor3};

/// Largest state count for which alignment enumerates permutations.
pub const MAX_ALIGN_STATES: usize = 10;

/// Clips a row to `[floor, 1]` and renormalizes it.
pub fn project_row<T: Real>(row: &mut [T], floor: T) -> Result<()> {
    for x in row.iter_mut() {
        if !x.is_finite() {
            return Err(Error::InvalidDistribution(format!("non-finite entry {x}")));
        }
        *x = x.max(floor).min(T::one());
    }
    let s = row.iter().fold(T::zero(), |acc, &x| acc + x);
    if !(s > T::zero()) {
        return Err(Error::InvalidDistribution(
            "row has no mass left after clipping".into(),
        ));
    }
    row.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

fn project_matrix<T: Real>(m: &DMatrix<T>, floor: T) -> Result<DMatrix<T>> {
    let mut out = m.clone();
    for r in 0..m.nrows() {
        let mut row: Vec<T> = m.row(r).iter().copied().collect();
        project_row(&mut row, floor)?;
        for (c, x) in row.into_iter().enumerate() {
            out[(r, c)] = x;
        }
    }
    Ok(out)
}

/// Per-action transition and observation matrices.
pub type MatrixPair<T> = (Vec<DMatrix<T>>, Vec<DMatrix<T>>);

/// Row-wise projection of raw estimates onto stochastic matrices.
pub fn project_to_feasible<T: Real>(
    p_hat: &[DMatrix<T>],
    omega_hat: &[DMatrix<T>],
    floor: T,
) -> Result<MatrixPair<T>> {
    let width = p_hat
        .iter()
        .chain(omega_hat)
        .map(|m| m.ncols())
        .max()
        .unwrap_or(1);
    if floor < T::zero() || floor * T::from_usize(width).unwrap() >= T::one() {
        return Err(Error::InvalidArgument(format!(
            "projection floor {floor} must lie in [0, 1/{width})"
        )));
    }
    let p = p_hat
        .iter()
        .map(|m| project_matrix(m, floor))
        .collect::<Result<Vec<_>>>()?;
    let w = omega_hat
        .iter()
        .map(|m| project_matrix(m, floor))
        .collect::<Result<Vec<_>>>()?;
    Ok((p, w))
}

/// `c * sqrt(ln(6 (O^2 + O) / delta) / n)`.
pub fn confidence_radius(n: usize, delta: f64, c: f64, num_obs: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "confidence radius needs n >= 1".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius constant {c} must be positive"
        )));
    }
    let o = num_obs as f64;
    Ok(c * ((6.0 * (o * o + o) / delta).ln() / n as f64).sqrt())
}

/// Observation (L1) and transition (L2) radii for every action.
pub fn confidence_radii(
    counts: &[usize],
    delta: f64,
    c1: f64,
    c2: f64,
    num_obs: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let obs = counts
        .iter()
        .map(|&n| confidence_radius(n, delta, c1, num_obs))
        .collect::<Result<Vec<_>>>()?;
    let trans = counts
        .iter()
        .map(|&n| confidence_radius(n, delta, c2, num_obs))
        .collect::<Result<Vec<_>>>()?;
    Ok((obs, trans))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Fewest triples an action needs before it is estimated.
    pub min_samples: usize,
    pub restarts: usize,
    pub iterations: usize,
    /// Seed of the power-method restarts; action `i` uses stream `i`.
    pub seed: u64,
    /// Observation radius constant.
    pub c1: f64,
    /// Transition radius constant.
    pub c2: f64,
    /// Projection floor for estimated probabilities.
    pub floor: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            min_samples: 100,
            restarts: 25,
            iterations: 50,
            seed: 0,
            c1: 1.0,
            c2: 1.0,
            floor: 0.01,
        }
    }
}

impl SpectralConfig {
    pub fn power(&self) -> PowerConfig {
        PowerConfig {
            restarts: self.restarts,
            iterations: self.iterations,
        }
    }
}

/// Projected estimates for every action with their sample counts and radii.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate<T: Real> {
    pub p_hat: Vec<DMatrix<T>>,
    pub omega_hat: Vec<DMatrix<T>>,
    pub counts: Vec<usize>,
    pub radii_obs: Vec<f64>,
    pub radii_trans: Vec<f64>,
    /// Per action: final label `m` is decomposition component `permutation[i][m]`.
    pub permutation: Vec<Vec<usize>>,
}

/// JSON layout of a [`ParameterEstimate`]; matrices are nested row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub observations: Vec<Vec<Vec<f64>>>,
    pub counts: Vec<usize>,
    pub radii_obs: Vec<f64>,
    pub radii_trans: Vec<f64>,
    pub permutation: Vec<Vec<usize>>,
}

fn rows_f64<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|x| x.as_f64()).collect())
        .collect()
}

impl<T: Real> ParameterEstimate<T> {
    pub fn num_states(&self) -> usize {
        self.p_hat.first().map_or(0, |p| p.nrows())
    }

    pub fn num_actions(&self) -> usize {
        self.p_hat.len()
    }

    pub fn num_obs(&self) -> usize {
        self.omega_hat.first().map_or(0, |w| w.ncols())
    }

    /// A model with the estimated dynamics and the given rewards.
    pub fn to_model(&self, rewards: &DMatrix<T>, r_max: T) -> Result<PomdpModel<T>> {
        PomdpModel::new(
            self.p_hat.clone(),
            self.omega_hat.clone(),
            rewards.clone(),
            r_max,
        )
    }

    pub fn to_file(&self) -> EstimateFile {
        EstimateFile {
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            num_obs: self.num_obs(),
            transitions: self.p_hat.iter().map(rows_f64).collect(),
            observations: self.omega_hat.iter().map(rows_f64).collect(),
            counts: self.counts.clone(),
            radii_obs: self.radii_obs.clone(),
            radii_trans: self.radii_trans.clone(),
            permutation: self.permutation.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Relabels the states of action `action`: new label `m` is old label `sigma[m]`.
    fn relabel(&mut self, action: usize, sigma: &[usize]) {
        let p = &self.p_hat[action];
        let w = &self.omega_hat[action];
        let n = sigma.len();
        self.p_hat[action] = DMatrix::from_fn(n, n, |r, c| p[(sigma[r], sigma[c])]);
        self.omega_hat[action] = DMatrix::from_fn(n, w.ncols(), |r, c| w[(sigma[r], c)]);
        let old = self.permutation[action].clone();
        self.permutation[action] = sigma.iter().map(|&s| old[s]).collect();
    }
}

fn alignment_cost<T: Real>(est: &DMatrix<T>, reference: &DMatrix<T>, sigma: &[usize]) -> T {
    let mut cost = T::zero();
    for (m, &s) in sigma.iter().enumerate() {
        for o in 0..est.ncols() {
            cost += (est[(s, o)] - reference[(m, o)]).abs();
        }
    }
    cost
}

/// Relabels each action's states to best match `reference` (one `M x O`
/// observation matrix per action) in summed L1 distance.
///
/// The decomposition of each action labels states independently, so every
/// action gets its own permutation. Ties keep the lexicographically first
/// permutation, which is the identity when it is optimal.
pub fn align_permutation<T: Real>(
    mut estimate: ParameterEstimate<T>,
    reference: &[DMatrix<T>],
) -> Result<ParameterEstimate<T>> {
    let n = estimate.num_states();
    if n > MAX_ALIGN_STATES {
        return Err(Error::InvalidArgument(format!(
            "alignment enumerates permutations and supports at most {MAX_ALIGN_STATES} states, got {n}"
        )));
    }
    if reference.len() != estimate.num_actions()
        || reference
            .iter()
            .any(|r| r.shape() != (n, estimate.num_obs()))
    {
        return Err(Error::Dimension(
            "alignment reference must have one states-by-observations matrix per action".into(),
        ));
    }
    for (i, reference) in reference.iter().enumerate() {
        let mut best: Option<(T, Vec<usize>)> = None;
        for sigma in (0..n).permutations(n) {
            let cost = alignment_cost(&estimate.omega_hat[i], reference, &sigma);
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, sigma));
            }
        }
        let (_, sigma) = best.expect("at least one permutation");
        estimate.relabel(i, &sigma);
    }
    Ok(estimate)
}

/// Without a reference: order each action's states by decreasing probability
/// of observation 0 (stable, so ties keep decomposition order).
fn canonical_order<T: Real>(mut estimate: ParameterEstimate<T>) -> ParameterEstimate<T> {
    for i in 0..estimate.num_actions() {
        let w = &estimate.omega_hat[i];
        let mut sigma: Vec<usize> = (0..w.nrows()).collect();
        sigma.sort_by(|&a, &b| {
            w[(b, 0)]
                .partial_cmp(&w[(a, 0)])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        estimate.relabel(i, &sigma);
    }
    estimate
}

/// Raw (unprojected) estimates for one action from its moments.
pub fn estimate_action<T: Real>(
    moments: &MomentSet<T>,
    num_states: usize,
    power: PowerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let dec = tensor_decompose(&moments.m2, &moments.m3, num_states, power, rng)?;
    let a3 = dec.vectors;
    let a2 = &moments.w21 * truncated_pinv(&moments.w31, num_states)? * &a3;
    let p = (truncated_pinv(&a2, num_states)? * &a3).transpose();
    Ok((p, a2.transpose()))
}

/// Estimates every action from `batch`, projects onto the simplex with
/// `config.floor`, then aligns to `reference` (or orders states canonically).
pub fn recover_parameters<T: Real>(
    batch: &ViewBatch,
    num_states: usize,
    config: &SpectralConfig,
    delta: f64,
    reference: Option<&[DMatrix<T>]>,
) -> Result<ParameterEstimate<T>> {
    let power = config.power();
    let raw = (0..batch.num_actions())
        .into_par_iter()
        .map(|i| {
            let moments = empirical_moments::<T>(batch, i, num_states, config.min_samples)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            estimate_action(&moments, num_states, power, &mut rng)
                .map_err(|e| moments::tag_action(e, i))
        })
        .collect::<Result<Vec<_>>>()?;
    let (p_raw, w_raw): (Vec<_>, Vec<_>) = raw.into_iter().unzip();
    let (p_hat, omega_hat) = project_to_feasible(&p_raw, &w_raw, T::lit(config.floor))?;
    let counts = batch.counts().to_vec();
    let (radii_obs, radii_trans) =
        confidence_radii(&counts, delta, config.c1, config.c2, batch.num_obs())?;
    let estimate = ParameterEstimate {
        permutation: vec![(0..num_states).collect(); p_hat.len()],
        p_hat,
        omega_hat,
        counts,
        radii_obs,
        radii_trans,
    };
    match reference {
        Some(r) => align_permutation(estimate, r),
        None => Ok(canonical_order(estimate)),
    }
}

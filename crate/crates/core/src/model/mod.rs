//! The POMDP tuple, belief states, the Bayes filter and closed-form constants.
//!
//! Indexing conventions used throughout the crate:
//!
//! * `transition(i)[(m, n)]` is the probability of moving from hidden state
//!   `m` to `n` when action `i` is taken;
//! * `observation(i)[(m, o)]` is the probability of emitting `o` in state `m`
//!   when the *previous* action was `i`;
//! * `reward(m, i)` is the deterministic reward of the pair `(m, i)`.

mod filter;
pub mod synthetic;
mod theory;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sum, Real};

pub use filter::{
    belief_update, expected_reward, observation_likelihood, replay_beliefs, replay_final,
    BeliefFilter,
};
pub use theory::{
    theoretical_constants, validate_model, InvertibilityCheck, TheoryConstants, ValidationReport,
};

/// Row-sum tolerance for stochastic matrices (double precision).
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Sum tolerance for belief vectors (double precision).
pub const BELIEF_TOL: f64 = 1e-10;

/// A finite POMDP with known rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel<T: Real> {
    transitions: Vec<DMatrix<T>>,
    observations: Vec<DMatrix<T>>,
    rewards: DMatrix<T>,
    r_max: T,
}

impl<T: Real> PomdpModel<T> {
    /// Builds a model, checking shapes, stochasticity and the reward range.
    ///
    /// `transitions` holds one `M x M` matrix per action, `observations` one
    /// `M x O` matrix per action, and `rewards` is `M x I`.
    pub fn new(
        transitions: Vec<DMatrix<T>>,
        observations: Vec<DMatrix<T>>,
        rewards: DMatrix<T>,
        r_max: T,
    ) -> Result<Self> {
        let num_actions = transitions.len();
        if num_actions == 0 {
            return Err(Error::Dimension("model has no actions".into()));
        }
        let num_states = transitions[0].nrows();
        if num_states == 0 {
            return Err(Error::Dimension("model has no hidden states".into()));
        }
        if observations.len() != num_actions {
            return Err(Error::Dimension(format!(
                "{} transition matrices but {} observation matrices",
                num_actions,
                observations.len()
            )));
        }
        let num_obs = observations[0].ncols();
        if num_obs == 0 {
            return Err(Error::Dimension("model has no observations".into()));
        }
        for (i, p) in transitions.iter().enumerate() {
            if p.shape() != (num_states, num_states) {
                return Err(Error::Dimension(format!(
                    "transition matrix {i} is {:?}, expected {num_states}x{num_states}",
                    p.shape()
                )));
            }
            check_stochastic(p, &format!("transition matrix {i}"))?;
        }
        for (i, w) in observations.iter().enumerate() {
            if w.shape() != (num_states, num_obs) {
                return Err(Error::Dimension(format!(
                    "observation matrix {i} is {:?}, expected {num_states}x{num_obs}",
                    w.shape()
                )));
            }
            check_stochastic(w, &format!("observation matrix {i}"))?;
        }
        if rewards.shape() != (num_states, num_actions) {
            return Err(Error::Dimension(format!(
                "reward matrix is {:?}, expected {num_states}x{num_actions}",
                rewards.shape()
            )));
        }
        if !(r_max > T::zero()) {
            return Err(Error::InvalidModel(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        for m in 0..num_states {
            for i in 0..num_actions {
                let r = rewards[(m, i)];
                if !(r >= T::zero() && r <= r_max) {
                    return Err(Error::InvalidModel(format!(
                        "reward R({m},{i}) = {r} outside [0, {r_max}]"
                    )));
                }
            }
        }
        Ok(Self {
            transitions,
            observations,
            rewards,
            r_max,
        })
    }

    /// Same rewards, different dynamics.
    pub fn with_parameters(
        &self,
        transitions: Vec<DMatrix<T>>,
        observations: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        Self::new(transitions, observations, self.rewards.clone(), self.r_max)
    }

    /// Model whose transition and observation rows are all uniform.
    pub fn uniform(rewards: DMatrix<T>, r_max: T, num_obs: usize) -> Result<Self> {
        let (m, i) = rewards.shape();
        let fm = T::one() / T::from_usize(m.max(1)).unwrap();
        let fo = T::one() / T::from_usize(num_obs.max(1)).unwrap();
        Self::new(
            vec![DMatrix::from_element(m, m, fm); i],
            vec![DMatrix::from_element(m, num_obs, fo); i],
            rewards,
            r_max,
        )
    }

    pub fn num_states(&self) -> usize {
        self.rewards.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_obs(&self) -> usize {
        self.observations[0].ncols()
    }

    pub fn transition(&self, action: usize) -> &DMatrix<T> {
        &self.transitions[action]
    }

    pub fn observation(&self, action: usize) -> &DMatrix<T> {
        &self.observations[action]
    }

    pub fn transitions(&self) -> &[DMatrix<T>] {
        &self.transitions
    }

    pub fn observations(&self) -> &[DMatrix<T>] {
        &self.observations
    }

    pub fn rewards(&self) -> &DMatrix<T> {
        &self.rewards
    }

    pub fn reward(&self, state: usize, action: usize) -> T {
        self.rewards[(state, action)]
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub(crate) fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: action,
                limit: self.num_actions(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_obs(&self, obs: usize) -> Result<()> {
        if obs >= self.num_obs() {
            return Err(Error::IndexOutOfRange {
                what: "observation",
                index: obs,
                limit: self.num_obs(),
            });
        }
        Ok(())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> Result<PomdpModel<U>> {
        PomdpModel::from_file(&self.to_file())
    }

    pub fn to_file(&self) -> ModelFile {
        let to_rows = |a: &DMatrix<T>| -> Vec<Vec<f64>> {
            (0..a.nrows())
                .map(|r| (0..a.ncols()).map(|c| a[(r, c)].as_f64()).collect())
                .collect()
        };
        ModelFile {
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            num_obs: self.num_obs(),
            transitions: self.transitions.iter().map(to_rows).collect(),
            observations: self.observations.iter().map(to_rows).collect(),
            rewards: to_rows(&self.rewards),
            r_max: self.r_max.as_f64(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let (m, i, o) = (file.num_states, file.num_actions, file.num_obs);
        if file.transitions.len() != i || file.observations.len() != i {
            return Err(Error::Dimension(format!(
                "expected {i} transition and observation matrices, got {} and {}",
                file.transitions.len(),
                file.observations.len()
            )));
        }
        let transitions = file
            .transitions
            .iter()
            .enumerate()
            .map(|(a, rows)| matrix_from_rows(rows, m, m, &format!("transitions[{a}]")))
            .collect::<Result<Vec<_>>>()?;
        let observations = file
            .observations
            .iter()
            .enumerate()
            .map(|(a, rows)| matrix_from_rows(rows, m, o, &format!("observations[{a}]")))
            .collect::<Result<Vec<_>>>()?;
        let rewards = matrix_from_rows(&file.rewards, m, i, "rewards")?;
        Self::new(transitions, observations, rewards, T::lit(file.r_max))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// The 2-state, 2-action, 2-observation benchmark POMDP used by the experiments.
pub fn benchmark_model<T: Real>() -> PomdpModel<T> {
    let m = |v: [f64; 4]| DMatrix::from_row_slice(2, 2, &v.map(T::lit));
    PomdpModel::new(
        vec![m([0.2, 0.8, 0.9, 0.1]), m([0.6, 0.4, 0.3, 0.7])],
        vec![m([0.7, 0.3, 0.4, 0.6]), m([0.2, 0.8, 0.9, 0.1])],
        m([1.0, 4.0, 3.0, 2.0]),
        T::lit(4.0),
    )
    .expect("benchmark model is valid")
}

/// On-disk model description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    /// `[action][from][to]`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `[action][state][observation]`
    pub observations: Vec<Vec<Vec<f64>>>,
    /// `[state][action]`
    pub rewards: Vec<Vec<f64>>,
    pub r_max: f64,
}

fn matrix_from_rows<T: Real>(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<DMatrix<T>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| T::lit(rows[r][c])))
}

fn check_stochastic<T: Real>(a: &DMatrix<T>, what: &str) -> Result<()> {
    let tol = T::tol(STOCHASTIC_TOL);
    for r in 0..a.nrows() {
        let mut s = T::zero();
        for c in 0..a.ncols() {
            let x = a[(r, c)];
            if !(x >= T::zero()) || !x.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "{what} has entry ({r},{c}) = {x}"
                )));
            }
            s += x;
        }
        if (s - T::one()).abs() > tol {
            return Err(Error::InvalidModel(format!("{what} row {r} sums to {s}")));
        }
    }
    Ok(())
}

/// A probability vector over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BeliefState<T: Real> {
    probs: Vec<T>,
}

impl<T: Real> BeliefState<T> {
    /// Checks nonnegativity and unit sum (tolerance 1e-10), then renormalizes.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty belief".into()));
        }
        if probs.iter().any(|p| !(*p >= T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "negative or non-finite entry in {probs:?}"
            )));
        }
        let s = sum(&probs);
        if (s - T::one()).abs() > T::tol(BELIEF_TOL) {
            return Err(Error::InvalidDistribution(format!("entries sum to {s}")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / s).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        let s = sum(&weights);
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {s}")));
        }
        Self::new(weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(num_states: usize) -> Self {
        let p = T::one() / T::from_usize(num_states).unwrap();
        Self {
            probs: vec![p; num_states],
        }
    }

    /// All mass on `state`.
    pub fn unit(num_states: usize, state: usize) -> Self {
        let mut probs = vec![T::zero(); num_states];
        probs[state] = T::one();
        Self { probs }
    }

    pub(crate) fn from_normalized(probs: Vec<T>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<T> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn l1_distance(&self, other: &Self) -> T {
        crate::scalar::l1_distance(&self.probs, &other.probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_round_trips_through_json() {
        let model = benchmark_model::<f64>();
        let text = serde_json::to_string(&model.to_file()).unwrap();
        let file: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(PomdpModel::<f64>::from_file(&file).unwrap(), model);
    }

    #[test]
    fn loader_rejects_non_stochastic_rows() {
        let mut file = benchmark_model::<f64>().to_file();
        file.transitions[0][1][0] = 0.95;
        assert!(matches!(
            PomdpModel::<f64>::from_file(&file),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn loader_rejects_bad_shapes_and_rewards() {
        let mut file = benchmark_model::<f64>().to_file();
        file.observations[1].pop();
        assert!(matches!(
            PomdpModel::<f64>::from_file(&file),
            Err(Error::Dimension(_))
        ));
        let mut file = benchmark_model::<f64>().to_file();
        file.rewards[0][1] = 4.5;
        assert!(PomdpModel::<f64>::from_file(&file).is_err());
        let mut file = benchmark_model::<f64>().to_file();
        file.transitions[1][0] = vec![1.2, -0.2];
        assert!(PomdpModel::<f64>::from_file(&file).is_err());
    }

    #[test]
    fn belief_constructor_checks_invariants() {
        assert!(BeliefState::<f64>::new(vec![0.5, 0.5]).is_ok());
        assert!(BeliefState::<f64>::new(vec![0.6, 0.5]).is_err());
        assert!(BeliefState::<f64>::new(vec![1.1, -0.1]).is_err());
        assert!(BeliefState::<f64>::new(vec![]).is_err());
        let b = BeliefState::<f64>::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(b.probs(), &[0.25, 0.75]);
    }

    #[test]
    fn casts_to_single_precision() {
        let model = benchmark_model::<f64>().cast::<f32>().unwrap();
        assert_eq!(model.transition(0)[(0, 1)], 0.8f32);
    }
}

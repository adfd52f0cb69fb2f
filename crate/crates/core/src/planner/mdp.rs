//! Finite MDP on grid points and its average-reward solution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{belief_update, expected_reward, observation_likelihood, PomdpModel};
use crate::planner::grid::BeliefGrid;
use crate::scalar::Real;

/// Grid-snapped belief MDP: rewards and sparse successor laws per (point, action).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteBeliefMdp<T: Real> {
    num_points: usize,
    num_actions: usize,
    rewards: Vec<T>,
    successors: Vec<Vec<(usize, T)>>,
}

impl<T: Real> FiniteBeliefMdp<T> {
    /// Builds an MDP from dense per-(state, action) data; used for fully
    /// observed problems and tests. `successors[s * I + i]` lists `(next, prob)`.
    pub fn new(
        num_points: usize,
        num_actions: usize,
        rewards: Vec<T>,
        successors: Vec<Vec<(usize, T)>>,
    ) -> Result<Self> {
        let n = num_points * num_actions;
        if num_points == 0 || num_actions == 0 || rewards.len() != n || successors.len() != n {
            return Err(Error::Dimension(format!(
                "{num_points} points x {num_actions} actions needs {n} rewards and successor lists"
            )));
        }
        for (k, succ) in successors.iter().enumerate() {
            let mut mass = T::zero();
            for &(next, p) in succ {
                if next >= num_points || p < T::zero() {
                    return Err(Error::InvalidDistribution(format!(
                        "successor ({next}, {p}) of entry {k}"
                    )));
                }
                mass += p;
            }
            if (mass - T::one()).abs() > T::tol(1e-10) {
                return Err(Error::InvalidDistribution(format!(
                    "successor mass of entry {k} is {mass}"
                )));
            }
        }
        Ok(Self {
            num_points,
            num_actions,
            rewards,
            successors,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn reward(&self, point: usize, action: usize) -> T {
        self.rewards[point * self.num_actions + action]
    }

    pub fn successors(&self, point: usize, action: usize) -> &[(usize, T)] {
        &self.successors[point * self.num_actions + action]
    }

    /// `r(s, i) + sum_s' P(s' | s, i) w(s')`.
    fn q_value(&self, w: &[T], point: usize, action: usize) -> T {
        self.successors(point, action)
            .iter()
            .fold(self.reward(point, action), |acc, &(n, p)| acc + p * w[n])
    }

    fn greedy(&self, w: &[T], point: usize) -> (usize, T) {
        let mut best = (0, self.q_value(w, point, 0));
        for i in 1..self.num_actions {
            let q = self.q_value(w, point, i);
            if q > best.1 {
                best = (i, q);
            }
        }
        best
    }
}

/// Snaps the exact belief dynamics of `model` onto `grid`.
pub fn induced_mdp<T: Real>(
    model: &PomdpModel<T>,
    grid: &BeliefGrid,
) -> Result<FiniteBeliefMdp<T>> {
    if grid.num_states() != model.num_states() {
        return Err(Error::Dimension(format!(
            "grid over {} states, model has {}",
            grid.num_states(),
            model.num_states()
        )));
    }
    let ni = model.num_actions();
    let per_point = (0..grid.len())
        .into_par_iter()
        .map(|id| {
            let b = grid.belief::<T>(id);
            let mut rewards = Vec::with_capacity(ni);
            let mut succ = Vec::with_capacity(ni);
            for i in 0..ni {
                rewards.push(expected_reward(model, &b, i)?);
                let lik = observation_likelihood(model, &b, i)?;
                let mut out: Vec<(usize, T)> = Vec::with_capacity(lik.len());
                for (o, &p) in lik.iter().enumerate() {
                    if p > T::zero() {
                        let next = belief_update(model, &b, i, o)?;
                        out.push((grid.nearest(next.probs()), p));
                    }
                }
                out.sort_by_key(|&(n, _)| n);
                let mut merged: Vec<(usize, T)> = Vec::with_capacity(out.len());
                for (n, p) in out {
                    match merged.last_mut() {
                        Some(last) if last.0 == n => last.1 += p,
                        _ => merged.push((n, p)),
                    }
                }
                succ.push(merged);
            }
            Ok((rewards, succ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rewards = Vec::with_capacity(grid.len() * ni);
    let mut successors = Vec::with_capacity(grid.len() * ni);
    for (r, s) in per_point {
        rewards.extend(r);
        successors.extend(s);
    }
    FiniteBeliefMdp::new(grid.len(), ni, rewards, successors)
}

/// Solution of the average-reward optimality equation on a finite MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct RviSolution<T: Real> {
    pub gain: T,
    /// Relative values, minimum zero.
    pub bias: Vec<T>,
    pub policy: Vec<usize>,
    /// Span of the last increment.
    pub residual: T,
    pub iterations: usize,
}

/// Weight of the identity in the aperiodicity transform `tau I + (1 - tau) P`.
const DAMPING: f64 = 0.5;

/// Relative value iteration on the damped operator, with reference point 0.
pub fn relative_value_iteration<T: Real>(
    mdp: &FiniteBeliefMdp<T>,
    tol: f64,
    max_iter: usize,
) -> Result<RviSolution<T>> {
    let n = mdp.num_points();
    let tol = T::tol(tol);
    let tau = T::lit(DAMPING);
    let keep = T::one() - tau;
    let mut w = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut residual = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    for iter in 1..=max_iter {
        for (s, slot) in next.iter_mut().enumerate() {
            let mut best = None;
            for i in 0..mdp.num_actions() {
                let expected = mdp
                    .successors(s, i)
                    .iter()
                    .fold(T::zero(), |acc, &(n, p)| acc + p * w[n]);
                let q = mdp.reward(s, i) + tau * w[s] + keep * expected;
                if best.is_none_or(|b| q > b) {
                    best = Some(q);
                }
            }
            *slot = best.expect("at least one action");
        }
        let (mut lo, mut hi) = (next[0] - w[0], next[0] - w[0]);
        for s in 1..n {
            let d = next[s] - w[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        residual = hi - lo;
        let shift = next[0];
        for (x, y) in w.iter_mut().zip(&next) {
            *x = *y - shift;
        }
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            // Undo the transform: the original bias is (1 - tau) w.
            let mut bias: Vec<T> = w.iter().map(|&x| keep * x).collect();
            let floor = bias.iter().copied().fold(bias[0], |a, b| a.min(b));
            bias.iter_mut().for_each(|x| *x -= floor);
            let policy = (0..n).map(|s| mdp.greedy(&bias, s).0).collect();
            return Ok(RviSolution {
                gain: (hi + lo) * T::lit(0.5),
                bias,
                policy,
                residual,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}

/// `max_s |g + h(s) - max_i [r(s, i) + sum P h]|` for a candidate solution.
pub fn bellman_residual<T: Real>(mdp: &FiniteBeliefMdp<T>, gain: T, bias: &[T]) -> T {
    (0..mdp.num_points())
        .map(|s| (gain + bias[s] - mdp.greedy(bias, s).1).abs())
        .fold(T::zero(), |a, b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_picks_best_reward() {
        let mdp = FiniteBeliefMdp::new(
            1,
            2,
            vec![1.0f64, 2.0],
            vec![vec![(0, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let sol = relative_value_iteration(&mdp, 1e-9, 1000).unwrap();
        assert!((sol.gain - 2.0).abs() < 1e-12);
        assert_eq!(sol.policy, vec![1]);
        assert_eq!(sol.bias, vec![0.0]);
    }

    #[test]
    fn periodic_chain_converges_with_damping() {
        // Deterministic 2-cycle with rewards 1 and 0.
        let mdp = FiniteBeliefMdp::new(
            2,
            1,
            vec![1.0f64, 0.0],
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let sol = relative_value_iteration(&mdp, 1e-9, 10_000).unwrap();
        assert!((sol.gain - 0.5).abs() < 1e-8);
        assert!(bellman_residual(&mdp, sol.gain, &sol.bias) < 1e-8);
    }

    #[test]
    fn malformed_mdp_is_rejected() {
        assert!(FiniteBeliefMdp::new(1, 1, vec![0.0], vec![vec![(0, 0.5)]]).is_err());
        assert!(FiniteBeliefMdp::new(1, 1, vec![0.0], vec![vec![(1, 1.0)]]).is_err());
        assert!(FiniteBeliefMdp::<f64>::new(1, 2, vec![0.0], vec![]).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let cycle = vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(0, 1.0)]];
        let mdp = FiniteBeliefMdp::new(3, 1, vec![1.0f64, 0.0, 0.0], cycle).unwrap();
        let err = relative_value_iteration(&mdp, 1e-12, 2).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }
}

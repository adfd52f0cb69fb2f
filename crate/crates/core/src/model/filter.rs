//! Bayes filter over hidden states and the belief-MDP primitives.

use crate::error::{Error, Result};
use crate::model::{BeliefState, PomdpModel, BELIEF_TOL};
use crate::scalar::Real;

fn check_belief<T: Real>(model: &PomdpModel<T>, b: &[T]) -> Result<()> {
    if b.len() != model.num_states() {
        return Err(Error::Dimension(format!(
            "belief has {} entries, model has {} states",
            b.len(),
            model.num_states()
        )));
    }
    Ok(())
}

/// Predicted next-state distribution `sum_m' b(m') P(m', .)` written into `out`.
fn predict<T: Real>(model: &PomdpModel<T>, b: &[T], action: usize, out: &mut [T]) {
    let p = model.transition(action);
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = b
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (m, &bm)| acc + bm * p[(m, n)]);
    }
}

/// Reusable in-place filter; avoids allocating on every step.
#[derive(Debug, Clone)]
pub struct BeliefFilter<T: Real> {
    belief: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> BeliefFilter<T> {
    pub fn new(initial: &BeliefState<T>) -> Self {
        Self {
            belief: initial.probs().to_vec(),
            scratch: vec![T::zero(); initial.len()],
        }
    }

    pub fn belief(&self) -> &[T] {
        &self.belief
    }

    pub fn to_state(&self) -> BeliefState<T> {
        BeliefState::from_normalized(self.belief.clone())
    }

    pub fn reset(&mut self, initial: &BeliefState<T>) {
        self.belief.clear();
        self.belief.extend_from_slice(initial.probs());
        self.scratch.resize(initial.len(), T::zero());
    }

    /// Advances the belief with action `action` and the observation it produced.
    pub fn update(&mut self, model: &PomdpModel<T>, action: usize, obs: usize) -> Result<()> {
        model.check_action(action)?;
        model.check_obs(obs)?;
        check_belief(model, &self.belief)?;
        predict(model, &self.belief, action, &mut self.scratch);
        let omega = model.observation(action);
        let mut z = T::zero();
        for (n, x) in self.scratch.iter_mut().enumerate() {
            *x *= omega[(n, obs)];
            z += *x;
        }
        if !(z > T::zero()) || !z.is_finite() {
            return Err(Error::ZeroLikelihood {
                action,
                obs,
                step: None,
            });
        }
        let mut s = T::zero();
        for x in self.scratch.iter_mut() {
            *x /= z;
            s += *x;
        }
        if (s - T::one()).abs() > T::tol(BELIEF_TOL) {
            return Err(Error::InvalidDistribution(format!(
                "updated belief sums to {s}"
            )));
        }
        for x in self.scratch.iter_mut() {
            *x /= s;
        }
        std::mem::swap(&mut self.belief, &mut self.scratch);
        Ok(())
    }
}

/// One Bayes step: the posterior over the next hidden state after taking
/// `action` in belief `b` and then observing `obs`.
pub fn belief_update<T: Real>(
    model: &PomdpModel<T>,
    b: &BeliefState<T>,
    action: usize,
    obs: usize,
) -> Result<BeliefState<T>> {
    let mut filter = BeliefFilter::new(b);
    filter.update(model, action, obs)?;
    Ok(filter.to_state())
}

/// Distribution of the next observation under belief `b` and `action`.
pub fn observation_likelihood<T: Real>(
    model: &PomdpModel<T>,
    b: &BeliefState<T>,
    action: usize,
) -> Result<Vec<T>> {
    model.check_action(action)?;
    check_belief(model, b.probs())?;
    let mut pred = vec![T::zero(); model.num_states()];
    predict(model, b.probs(), action, &mut pred);
    let omega = model.observation(action);
    Ok((0..model.num_obs())
        .map(|o| {
            pred.iter()
                .enumerate()
                .fold(T::zero(), |acc, (n, &q)| acc + q * omega[(n, o)])
        })
        .collect())
}

/// Belief-averaged reward `sum_m R(m, action) b(m)`.
pub fn expected_reward<T: Real>(
    model: &PomdpModel<T>,
    b: &BeliefState<T>,
    action: usize,
) -> Result<T> {
    model.check_action(action)?;
    check_belief(model, b.probs())?;
    Ok(b.probs()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (m, &bm)| {
            acc + bm * model.reward(m, action)
        }))
}

fn check_aligned(actions: &[usize], observations: &[usize]) -> Result<()> {
    if actions.len() != observations.len() {
        return Err(Error::Dimension(format!(
            "{} actions but {} observations",
            actions.len(),
            observations.len()
        )));
    }
    Ok(())
}

fn tag_step(err: Error, step: usize) -> Error {
    match err {
        Error::ZeroLikelihood { action, obs, .. } => Error::ZeroLikelihood {
            action,
            obs,
            step: Some(step),
        },
        other => other,
    }
}

/// Filters a whole history. `observations[t]` is the observation produced by
/// `actions[t]`; the result starts with `b0` and has `actions.len() + 1` entries.
pub fn replay_beliefs<T: Real>(
    model: &PomdpModel<T>,
    b0: &BeliefState<T>,
    actions: &[usize],
    observations: &[usize],
) -> Result<Vec<BeliefState<T>>> {
    check_aligned(actions, observations)?;
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(b0.clone());
    let mut filter = BeliefFilter::new(b0);
    for (t, (&a, &o)) in actions.iter().zip(observations).enumerate() {
        filter.update(model, a, o).map_err(|e| tag_step(e, t))?;
        out.push(filter.to_state());
    }
    Ok(out)
}

/// Like [`replay_beliefs`] but only returns the last belief.
pub fn replay_final<T: Real>(
    model: &PomdpModel<T>,
    b0: &BeliefState<T>,
    actions: &[usize],
    observations: &[usize],
) -> Result<BeliefState<T>> {
    check_aligned(actions, observations)?;
    let mut filter = BeliefFilter::new(b0);
    for (t, (&a, &o)) in actions.iter().zip(observations).enumerate() {
        filter.update(model, a, o).map_err(|e| tag_step(e, t))?;
    }
    Ok(filter.to_state())
}

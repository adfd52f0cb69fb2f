//! Reference policies: the best observation-to-action map for a known model,
//! and uniform random play.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::stationary_distribution;
use crate::model::PomdpModel;
use crate::scalar::Real;
use crate::sim::{rng_stream, Environment, StepTag};

/// Largest number of maps enumerated by [`best_memoryless_policy`].
pub const MAX_MEMORYLESS_MAPS: u64 = 1_000_000;

const RANDOM_STREAM: u64 = 0xA11;

/// Deterministic map from the current observation to an action.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct MemorylessPolicy<T: Real> {
    pub map: Vec<usize>,
    pub gain: T,
}

/// Long-run average reward of playing `map[o]` after each observation `o`.
///
/// The chain runs on pairs `(m, i_prev)`: the observation is drawn from
/// `Omega(. | m, i_prev)`, the action is `map[o]` and the state moves with
/// that action. A reducible chain is averaged from the uniform pair law.
pub fn memoryless_gain<T: Real>(model: &PomdpModel<T>, map: &[usize]) -> Result<T> {
    let (ns, ni, no) = (model.num_states(), model.num_actions(), model.num_obs());
    if map.len() != no {
        return Err(Error::Dimension(format!(
            "map covers {} observations, model has {no}",
            map.len()
        )));
    }
    for &a in map {
        model.check_action(a)?;
    }
    let n = ns * ni;
    let pair = |m: usize, i: usize| m * ni + i;
    let mut q = DMatrix::<T>::zeros(n, n);
    let mut r = vec![T::zero(); n];
    for m in 0..ns {
        for prev in 0..ni {
            let omega = model.observation(prev);
            for (o, &a) in map.iter().enumerate() {
                let po = omega[(m, o)];
                if po == T::zero() {
                    continue;
                }
                r[pair(m, prev)] += po * model.reward(m, a);
                let p = model.transition(a);
                for next in 0..ns {
                    q[(pair(m, prev), pair(next, a))] += po * p[(m, next)];
                }
            }
        }
    }
    let pi = stationary_distribution(&q)?;
    Ok(pi
        .iter()
        .zip(&r)
        .fold(T::zero(), |acc, (&w, &x)| acc + w * x))
}

/// Enumerates all `I^O` maps and keeps the best (first on ties).
pub fn best_memoryless_policy<T: Real>(model: &PomdpModel<T>) -> Result<MemorylessPolicy<T>> {
    let (ni, no) = (model.num_actions() as u64, model.num_obs() as u32);
    let count = ni
        .checked_pow(no)
        .filter(|&c| c <= MAX_MEMORYLESS_MAPS)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{ni}^{no} memoryless maps exceed the enumeration cap {MAX_MEMORYLESS_MAPS}"
            ))
        })?;
    let mut best: Option<MemorylessPolicy<T>> = None;
    for idx in 0..count {
        let mut rest = idx;
        let map: Vec<usize> = (0..no)
            .map(|_| {
                let a = (rest % ni) as usize;
                rest /= ni;
                a
            })
            .collect();
        let gain = memoryless_gain(model, &map)?;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(MemorylessPolicy { map, gain });
        }
    }
    Ok(best.expect("at least one map"))
}

/// Plays `map` on the latest observation; the first period uses action 0.
pub fn run_memoryless<E: Environment>(env: &mut E, map: &[usize], horizon: usize) -> Result<()> {
    if map.len() != env.num_obs() {
        return Err(Error::Dimension(format!(
            "map covers {} observations, environment emits {}",
            map.len(),
            env.num_obs()
        )));
    }
    let mut action = 0;
    while env.clock() < horizon {
        let obs = env.step(action, StepTag::exploit(0))?;
        action = map[obs];
    }
    Ok(())
}

/// Uniformly random actions from a private stream of `seed`.
pub fn run_random<E: Environment>(env: &mut E, seed: u64, horizon: usize) -> Result<()> {
    let mut rng = rng_stream(seed, RANDOM_STREAM);
    let ni = env.num_actions();
    while env.clock() < horizon {
        env.step(rng.random_range(0..ni), StepTag::exploit(0))?;
    }
    Ok(())
}

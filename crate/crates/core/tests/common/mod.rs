#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use seeu_core::linalg::stationary_distribution;
use seeu_core::model::{BeliefState, PomdpModel};
use seeu_core::sim::{EnvState, StepTag};
use seeu_core::spectral::ViewBatch;

/// Round-robin exploration: runs of `run` periods per action until every
/// action has `per_action` periods. Returns the view batch.
pub fn explore(model: &PomdpModel<f64>, per_action: usize, run: usize, seed: u64) -> ViewBatch {
    let ni = model.num_actions();
    let mut env = EnvState::new(model, &BeliefState::uniform(model.num_states()), seed, 0).unwrap();
    let mut batch = ViewBatch::new(ni, model.num_obs());
    let mut done = 0;
    while done < per_action {
        let len = run.min(per_action - done);
        for i in 0..ni {
            let mut obs = Vec::with_capacity(len);
            for _ in 0..len {
                obs.push(env.step_env(i, StepTag::explore(1)).unwrap().0);
            }
            batch.add_segment(&vec![i; len], &obs).unwrap();
        }
        done += len;
    }
    batch
}

/// Largest row L1 error over the given transition and observation matrices
/// (pass an empty slice to skip one kind).
pub fn max_row_error(p: &[DMatrix<f64>], w: &[DMatrix<f64>], truth: &PomdpModel<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..truth.num_actions() {
        let pairs = [
            (p.get(i), truth.transition(i)),
            (w.get(i), truth.observation(i)),
        ];
        for (est, tru) in pairs.into_iter().filter_map(|(e, t)| e.map(|e| (e, t))) {
            for r in 0..tru.nrows() {
                let d: f64 = (0..tru.ncols())
                    .map(|c| (est[(r, c)] - tru[(r, c)]).abs())
                    .sum();
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// Optimal average reward of a fully observed MDP by enumerating the
/// deterministic stationary policies.
pub fn enumerate_mdp_gain(p: &[DMatrix<f64>], r: &DMatrix<f64>) -> f64 {
    let (ns, ni) = (r.nrows(), r.ncols());
    let mut best = f64::NEG_INFINITY;
    for idx in 0..ni.pow(ns as u32) {
        let mut rest = idx;
        let pol: Vec<usize> = (0..ns)
            .map(|_| {
                let a = rest % ni;
                rest /= ni;
                a
            })
            .collect();
        let q = DMatrix::from_fn(ns, ns, |s, n| p[pol[s]][(s, n)]);
        let pi = stationary_distribution(&q).unwrap();
        let g: f64 = (0..ns).map(|s| pi[s] * r[(s, pol[s])]).sum();
        best = best.max(g);
    }
    best
}

pub fn random_belief<R: Rng>(rng: &mut R, n: usize) -> BeliefState<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    BeliefState::from_weights(w).unwrap()
}

/// Action/observation history of length `len` drawn from `model` with
/// uniformly random actions.
pub fn random_history<R: Rng>(
    rng: &mut R,
    model: &PomdpModel<f64>,
    b0: &BeliefState<f64>,
    len: usize,
) -> (Vec<usize>, Vec<usize>) {
    let seed = rng.random::<u64>();
    let mut env = EnvState::new(model, b0, seed, 0).unwrap();
    let mut actions = Vec::with_capacity(len);
    let mut obs = Vec::with_capacity(len);
    for _ in 0..len {
        let a = rng.random_range(0..model.num_actions());
        actions.push(a);
        obs.push(env.step_env(a, StepTag::exploit(0)).unwrap().0);
    }
    (actions, obs)
}

/// OLS slope of ln y on ln x.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

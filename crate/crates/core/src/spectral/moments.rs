//! Observation triples and the moments built from them.
//!
//! View 1 is the previous observation, view 2 the current one (emitted by the
//! reference hidden state) and view 3 the next one. All three come from the
//! same constant-action run, so `A2(o, m) = Omega(o | m, i)`,
//! `A3 = A2 P_i^T` and `W_pq = A_p diag(w) A_q^T`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{stationary_distribution, truncated_pinv};
use crate::model::PomdpModel;
use crate::scalar::Real;
use crate::spectral::tensor::Tensor3;

/// Per-action histogram of observation triples `(o_{t-1}, o_t, o_{t+1})`
/// collected inside constant-action runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewBatch {
    num_actions: usize,
    num_obs: usize,
    tables: Vec<Vec<u64>>,
    counts: Vec<usize>,
}

impl ViewBatch {
    pub fn new(num_actions: usize, num_obs: usize) -> Self {
        Self {
            num_actions,
            num_obs,
            tables: vec![vec![0; num_obs * num_obs * num_obs]; num_actions],
            counts: vec![0; num_actions],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    /// Number of triples recorded for `action`.
    pub fn count(&self, action: usize) -> usize {
        self.counts[action]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Count of the triple `(a, b, c)` under `action`.
    pub fn triple_count(&self, action: usize, a: usize, b: usize, c: usize) -> u64 {
        let o = self.num_obs;
        self.tables[action][(a * o + b) * o + c]
    }

    /// Adds every triple of a time-contiguous stretch of play.
    ///
    /// `observations[t]` is the observation that followed `actions[t]`. A run
    /// of `L` equal actions yields `L - 2` triples; shorter runs yield none.
    pub fn add_segment(&mut self, actions: &[usize], observations: &[usize]) -> Result<()> {
        if actions.len() != observations.len() {
            return Err(Error::Dimension(format!(
                "{} actions but {} observations",
                actions.len(),
                observations.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                limit: self.num_actions,
            });
        }
        if let Some(&o) = observations.iter().find(|&&o| o >= self.num_obs) {
            return Err(Error::IndexOutOfRange {
                what: "observation",
                index: o,
                limit: self.num_obs,
            });
        }
        let o = self.num_obs;
        for t in 1..actions.len().saturating_sub(1) {
            let i = actions[t];
            if actions[t - 1] == i && actions[t + 1] == i {
                let k = (observations[t - 1] * o + observations[t]) * o + observations[t + 1];
                self.tables[i][k] += 1;
                self.counts[i] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ViewBatch) -> Result<()> {
        if other.num_actions != self.num_actions || other.num_obs != self.num_obs {
            return Err(Error::Dimension(
                "merging view batches of different shapes".into(),
            ));
        }
        for i in 0..self.num_actions {
            for (x, y) in self.tables[i].iter_mut().zip(&other.tables[i]) {
                *x += y;
            }
            self.counts[i] += other.counts[i];
        }
        Ok(())
    }

    /// Empirical joint pmf of the triples for `action`.
    pub fn joint<T: Real>(&self, action: usize) -> Tensor3<T> {
        let o = self.num_obs;
        let n = T::from_usize(self.counts[action].max(1)).unwrap();
        let table = &self.tables[action];
        Tensor3::from_fn([o, o, o], |a, b, c| {
            T::from_u64(table[(a * o + b) * o + c]).unwrap() / n
        })
    }
}

/// Triples from one contiguous history.
pub fn build_views(
    actions: &[usize],
    observations: &[usize],
    num_actions: usize,
    num_obs: usize,
) -> Result<ViewBatch> {
    let mut batch = ViewBatch::new(num_actions, num_obs);
    batch.add_segment(actions, observations)?;
    Ok(batch)
}

/// Pairwise view correlations and the symmetric moments of the modified views.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<T: Real> {
    pub w12: DMatrix<T>,
    pub w13: DMatrix<T>,
    pub w21: DMatrix<T>,
    pub w23: DMatrix<T>,
    pub w31: DMatrix<T>,
    pub w32: DMatrix<T>,
    /// `E[v1~ (x) v2~]`
    pub m2: DMatrix<T>,
    /// `E[v1~ (x) v2~ (x) v3]`
    pub m3: Tensor3<T>,
    pub count: usize,
}

impl<T: Real> MomentSet<T> {
    /// `W_pq` for `p, q` in `1..=3`, `p != q`.
    pub fn w(&self, p: usize, q: usize) -> &DMatrix<T> {
        match (p, q) {
            (1, 2) => &self.w12,
            (1, 3) => &self.w13,
            (2, 1) => &self.w21,
            (2, 3) => &self.w23,
            (3, 1) => &self.w31,
            (3, 2) => &self.w32,
            _ => panic!("no correlation matrix W_{p}{q}"),
        }
    }
}

/// Moments from a joint triple pmf, with rank-`num_states` pseudoinverses.
pub fn moments_from_joint<T: Real>(
    joint: &Tensor3<T>,
    num_states: usize,
    count: usize,
) -> Result<MomentSet<T>> {
    let w23 = joint.marginal(0);
    let w13 = joint.marginal(1);
    let w12 = joint.marginal(2);
    let (w21, w31, w32) = (w12.transpose(), w13.transpose(), w23.transpose());
    // v1~ = W32 W12^+ v1 and v2~ = W31 W21^+ v2 both have conditional mean A3.
    let t1 = &w32 * truncated_pinv(&w12, num_states)?;
    let t2 = &w31 * truncated_pinv(&w21, num_states)?;
    let m2 = &t1 * &w12 * t2.transpose();
    let m3 = joint.mode_product(0, &t1).mode_product(1, &t2);
    Ok(MomentSet {
        w12,
        w13,
        w21,
        w23,
        w31,
        w32,
        m2,
        m3,
        count,
    })
}

pub(crate) fn tag_action(err: Error, action: usize) -> Error {
    match err {
        Error::Conditioning { detail, .. } => Error::Conditioning {
            action: Some(action),
            detail,
        },
        other => other,
    }
}

/// Empirical moments for `action`, refusing batches below `min_samples`.
pub fn empirical_moments<T: Real>(
    batch: &ViewBatch,
    action: usize,
    num_states: usize,
    min_samples: usize,
) -> Result<MomentSet<T>> {
    if action >= batch.num_actions() {
        return Err(Error::IndexOutOfRange {
            what: "action",
            index: action,
            limit: batch.num_actions(),
        });
    }
    let n = batch.count(action);
    if n < min_samples.max(1) {
        return Err(Error::InsufficientSamples {
            action,
            available: n,
            required: min_samples.max(1),
        });
    }
    moments_from_joint(&batch.joint(action), num_states, n).map_err(|e| tag_action(e, action))
}

/// Exact joint pmf of three consecutive observations under constant `action`
/// with the chain started from its stationary law.
pub fn population_joint<T: Real>(model: &PomdpModel<T>, action: usize) -> Result<Tensor3<T>> {
    model.check_action(action)?;
    let p = model.transition(action);
    let w = model.observation(action);
    let pi = stationary_distribution(p)?;
    let (ns, no) = (model.num_states(), model.num_obs());
    let mut joint = Tensor3::cubic(no);
    for n in 0..ns {
        for m in 0..ns {
            for k in 0..ns {
                let path = pi[n] * p[(n, m)] * p[(m, k)];
                for a in 0..no {
                    for b in 0..no {
                        let ab = path * w[(n, a)] * w[(m, b)];
                        for c in 0..no {
                            let x = joint.get(a, b, c) + ab * w[(k, c)];
                            joint.set(a, b, c, x);
                        }
                    }
                }
            }
        }
    }
    Ok(joint)
}

/// Exact moments for `action`, as an infinitely long stationary run would give.
pub fn population_moments<T: Real>(model: &PomdpModel<T>, action: usize) -> Result<MomentSet<T>> {
    let joint = population_joint(model, action)?;
    moments_from_joint(&joint, model.num_states(), usize::MAX).map_err(|e| tag_action(e, action))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_model;

    #[test]
    fn single_run_counts() {
        let n = 50;
        let actions = vec![1; n];
        let obs: Vec<usize> = (0..n).map(|t| t % 2).collect();
        let b = build_views(&actions, &obs, 2, 2).unwrap();
        assert_eq!(b.count(1), n - 2);
        assert_eq!(b.count(0), 0);
    }

    #[test]
    fn alternating_actions_give_nothing() {
        let actions: Vec<usize> = (0..40).map(|t| t % 2).collect();
        let b = build_views(&actions, &vec![0; 40], 2, 2).unwrap();
        assert_eq!(b.counts(), &[0, 0]);
    }

    #[test]
    fn short_runs_and_boundaries() {
        let actions = [0, 0, 1, 1, 1, 0, 0, 0, 0];
        let obs = [0, 1, 0, 1, 1, 1, 0, 0, 1];
        let b = build_views(&actions, &obs, 2, 2).unwrap();
        assert_eq!(b.count(1), 1);
        assert_eq!(b.count(0), 2);
        assert_eq!(b.triple_count(1, 0, 1, 1), 1);
        assert_eq!(b.triple_count(0, 1, 0, 0), 1);
        assert_eq!(b.triple_count(0, 0, 0, 1), 1);
    }

    #[test]
    fn identical_triples_give_point_mass() {
        let b = build_views(&[0; 4], &[1; 4], 1, 2).unwrap();
        assert_eq!(b.count(0), 2);
        let j: Tensor3<f64> = b.joint(0);
        assert_eq!(j.get(1, 1, 1), 1.0);
        assert_eq!(j.sum(), 1.0);
        let m = moments_from_joint(&j, 1, 2).unwrap();
        assert_eq!(m.w12[(1, 1)], 1.0);
        assert_eq!(m.w12.sum(), 1.0);
    }

    #[test]
    fn insufficient_samples() {
        let b = build_views(&[0; 50], &[0; 50], 1, 2).unwrap();
        let err = empirical_moments::<f64>(&b, 0, 2, 100).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                available: 48,
                required: 100,
                ..
            }
        ));
    }

    #[test]
    fn rank_deficient_views_are_a_conditioning_error() {
        let b = build_views(&[0; 200], &[1; 200], 1, 2).unwrap();
        let err = empirical_moments::<f64>(&b, 0, 2, 100).unwrap_err();
        assert!(matches!(
            err,
            Error::Conditioning {
                action: Some(0),
                ..
            }
        ));
    }

    #[test]
    fn population_joint_is_a_pmf() {
        let model = benchmark_model::<f64>();
        for i in 0..2 {
            let j = population_joint(&model, i).unwrap();
            assert!((j.sum() - 1.0).abs() < 1e-12);
            assert!(j.as_slice().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn segments_merge_like_separate_batches() {
        let a1 = [0, 0, 0, 0, 1, 1, 1];
        let o1 = [0, 1, 1, 0, 0, 1, 0];
        let a2 = [1, 1, 1, 1];
        let o2 = [1, 1, 0, 0];
        let mut b = ViewBatch::new(2, 2);
        b.add_segment(&a1, &o1).unwrap();
        b.add_segment(&a2, &o2).unwrap();
        let mut c = build_views(&a1, &o1, 2, 2).unwrap();
        c.merge(&build_views(&a2, &o2, 2, 2).unwrap()).unwrap();
        assert_eq!(b, c);
        assert_eq!(b.counts(), &[2, 3]);
    }
}

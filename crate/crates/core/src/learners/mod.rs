//! Online agents: the episodic explore/exploit learners and two baselines.

mod baselines;

use std::io::Write;

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::synthetic::parameter_distance;
use crate::model::{replay_final, BeliefFilter, BeliefState, PomdpModel};
use crate::planner::{optimistic_model, plan, PlannerConfig};
use crate::scalar::Real;
use crate::sim::{rng_stream, Environment, StepTag};
use crate::spectral::{recover_parameters, ParameterEstimate, SpectralConfig, ViewBatch};

pub use baselines::{
    best_memoryless_policy, memoryless_gain, run_memoryless, run_random, MemorylessPolicy,
};

/// Stream id of the learner's private random numbers (candidate sampling).
const CANDIDATE_STREAM: u64 = 0x5EE0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Consecutive exploration periods per action per episode.
    pub tau1: usize,
    /// Exploitation length of episode `k` is `ceil(tau2 sqrt(k))`.
    pub tau2: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Starting belief; uniform when absent.
    pub initial_belief: Option<Vec<f64>>,
    pub planner: PlannerConfig,
    /// Sampled models per optimistic search, in addition to the center.
    pub candidates: usize,
    /// Probability floor applied to estimates.
    pub floor: f64,
    pub min_samples: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            tau1: 200,
            tau2: 400.0,
            delta: 0.1,
            c1: 1.0,
            c2: 1.0,
            initial_belief: None,
            planner: PlannerConfig::default(),
            candidates: 16,
            floor: 0.01,
            min_samples: 100,
            restarts: 25,
            iterations: 50,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau1 < 3 {
            return Err(Error::InvalidArgument(format!(
                "tau1 = {} is too short to form observation triples (need >= 3)",
                self.tau1
            )));
        }
        if !(self.tau2 >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau2 = {} must be >= 1",
                self.tau2
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta = {} outside (0, 1)",
                self.delta
            )));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::InvalidArgument(
                "radius constants must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn spectral(&self) -> SpectralConfig {
        SpectralConfig {
            min_samples: self.min_samples,
            restarts: self.restarts,
            iterations: self.iterations,
            seed: self.seed,
            c1: self.c1,
            c2: self.c2,
            floor: self.floor,
        }
    }

    fn initial_belief<T: Real>(&self, num_states: usize) -> Result<BeliefState<T>> {
        match &self.initial_belief {
            None => Ok(BeliefState::uniform(num_states)),
            Some(b) if b.len() == num_states => {
                BeliefState::new(b.iter().map(|&x| T::lit(x)).collect())
            }
            Some(b) => Err(Error::Dimension(format!(
                "initial belief has {} entries, expected {num_states}",
                b.len()
            ))),
        }
    }
}

/// Phase lengths and confidence level of episode `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub explore_len: usize,
    pub exploit_len: usize,
    pub delta_k: f64,
}

pub fn episode_schedule(
    k: usize,
    tau1: usize,
    tau2: f64,
    num_actions: usize,
    delta: f64,
) -> Schedule {
    assert!(k >= 1, "episodes are numbered from 1");
    let kf = k as f64;
    Schedule {
        explore_len: tau1 * num_actions,
        exploit_len: (tau2 * kf.sqrt()).ceil() as usize,
        delta_k: delta / (kf * kf * kf),
    }
}

/// What the agent knows in advance: the state count and the reward table.
#[derive(Debug, Clone)]
pub struct Knowledge<T: Real> {
    pub num_states: usize,
    pub rewards: DMatrix<T>,
    pub r_max: T,
    /// Observation matrices used to name estimated states. When absent each
    /// estimate is aligned to the previous episode's.
    pub label_reference: Option<Vec<DMatrix<T>>>,
}

impl<T: Real> Knowledge<T> {
    /// Everything but the dynamics of `model`; labels are anchored to its
    /// observation matrices.
    pub fn from_model(model: &PomdpModel<T>) -> Self {
        Self {
            num_states: model.num_states(),
            rewards: model.rewards().clone(),
            r_max: model.r_max(),
            label_reference: Some(model.observations().to_vec()),
        }
    }

    pub fn without_reference(mut self) -> Self {
        self.label_reference = None;
        self
    }
}

/// Source of parameter estimates from exploration triples.
pub trait Estimator<T: Real> {
    fn estimate(
        &mut self,
        batch: &ViewBatch,
        num_states: usize,
        delta: f64,
        reference: Option<&[DMatrix<T>]>,
    ) -> Result<ParameterEstimate<T>>;
}

/// The spectral method.
#[derive(Debug, Clone, Default)]
pub struct SpectralEstimator {
    pub config: SpectralConfig,
}

impl<T: Real> Estimator<T> for SpectralEstimator {
    fn estimate(
        &mut self,
        batch: &ViewBatch,
        num_states: usize,
        delta: f64,
        reference: Option<&[DMatrix<T>]>,
    ) -> Result<ParameterEstimate<T>> {
        recover_parameters(batch, num_states, &self.config, delta, reference)
    }
}

/// Always returns the same parameters with fixed radii; for controlled runs.
#[derive(Debug, Clone)]
pub struct FixedEstimator<T: Real> {
    pub model: PomdpModel<T>,
    pub radius_obs: f64,
    pub radius_trans: f64,
}

impl<T: Real> Estimator<T> for FixedEstimator<T> {
    fn estimate(
        &mut self,
        batch: &ViewBatch,
        num_states: usize,
        _delta: f64,
        _reference: Option<&[DMatrix<T>]>,
    ) -> Result<ParameterEstimate<T>> {
        let n = self.model.num_actions();
        Ok(ParameterEstimate {
            p_hat: self.model.transitions().to_vec(),
            omega_hat: self.model.observations().to_vec(),
            counts: batch.counts().to_vec(),
            radii_obs: vec![self.radius_obs; n],
            radii_trans: vec![self.radius_trans; n],
            permutation: vec![(0..num_states).collect(); n],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Seeu,
    Etc,
}

/// How the exploitation model of an episode was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Planned from the fresh estimate (ETC) or the optimistic search (SEEU).
    Estimate,
    /// All optimistic candidates failed; the center estimate was used.
    CenterFallback,
    /// Estimation failed; the previous episode's model was reused.
    Previous,
    /// Estimation failed in the first episode; uniform parameters were used.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord<T: Real> {
    pub k: usize,
    pub explore_len: usize,
    pub exploit_len: usize,
    /// Periods actually played (the horizon may cut an episode short).
    pub explored: usize,
    pub exploited: usize,
    pub delta_k: f64,
    pub estimate: Option<ParameterEstimate<T>>,
    pub estimation_error: Option<String>,
    pub source: Option<ModelSource>,
    /// Index of the chosen optimistic candidate (0 is the center).
    pub candidate: Option<usize>,
    pub planned_gain: Option<T>,
    pub model: Option<PomdpModel<T>>,
}

impl<T: Real> EpisodeRecord<T> {
    fn new(k: usize, s: Schedule) -> Self {
        Self {
            k,
            explore_len: s.explore_len,
            exploit_len: s.exploit_len,
            explored: 0,
            exploited: 0,
            delta_k: s.delta_k,
            estimate: None,
            estimation_error: None,
            source: None,
            candidate: None,
            planned_gain: None,
            model: None,
        }
    }
}

/// One row per episode; estimation errors are measured against `truth` when given.
pub fn write_episode_csv<T: Real, W: Write>(
    records: &[EpisodeRecord<T>],
    truth: Option<&PomdpModel<T>>,
    writer: W,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        k: usize,
        explore_len: usize,
        exploit_len: usize,
        delta_k: f64,
        planned_gain: Option<f64>,
        est_err_p: Option<f64>,
        est_err_omega: Option<f64>,
        source: Option<ModelSource>,
    }
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        let err = match (truth, &r.estimate) {
            (Some(t), Some(e)) => e
                .to_model(t.rewards(), t.r_max())
                .ok()
                .map(|m| parameter_distance(t, &m)),
            _ => None,
        };
        w.serialize(Row {
            k: r.k,
            explore_len: r.explore_len,
            exploit_len: r.exploit_len,
            delta_k: r.delta_k,
            planned_gain: r.planned_gain.map(|g| g.as_f64()),
            est_err_p: err.map(|d| d.transition_l1.as_f64()),
            est_err_omega: err.map(|d| d.observation_l1.as_f64()),
            source: r.source,
        })?;
    }
    w.flush()?;
    Ok(())
}

struct History {
    actions: Vec<usize>,
    observations: Vec<usize>,
}

impl History {
    fn play<E: Environment>(&mut self, env: &mut E, action: usize, tag: StepTag) -> Result<usize> {
        let obs = env.step(action, tag)?;
        self.actions.push(action);
        self.observations.push(obs);
        Ok(obs)
    }
}

/// SEEU: explore round-robin, estimate, pick the optimistic model in the
/// confidence region, replay the history under it and exploit its plan.
pub fn run_seeu<T: Real, E: Environment, S: Estimator<T>>(
    env: &mut E,
    knowledge: &Knowledge<T>,
    config: &LearnerConfig,
    horizon: usize,
    estimator: &mut S,
) -> Result<Vec<EpisodeRecord<T>>> {
    run_episodes(
        LearnerKind::Seeu,
        env,
        knowledge,
        config,
        horizon,
        estimator,
    )
}

/// ETC: like SEEU but plans with the point estimate.
pub fn run_etc<T: Real, E: Environment, S: Estimator<T>>(
    env: &mut E,
    knowledge: &Knowledge<T>,
    config: &LearnerConfig,
    horizon: usize,
    estimator: &mut S,
) -> Result<Vec<EpisodeRecord<T>>> {
    run_episodes(LearnerKind::Etc, env, knowledge, config, horizon, estimator)
}

/// Shared episode loop. Stops once the environment clock reaches `horizon`.
pub fn run_episodes<T: Real, E: Environment, S: Estimator<T>>(
    kind: LearnerKind,
    env: &mut E,
    knowledge: &Knowledge<T>,
    config: &LearnerConfig,
    horizon: usize,
    estimator: &mut S,
) -> Result<Vec<EpisodeRecord<T>>> {
    config.validate()?;
    let (ni, no, ns) = (env.num_actions(), env.num_obs(), knowledge.num_states);
    if knowledge.rewards.shape() != (ns, ni) {
        return Err(Error::Dimension(format!(
            "reward table is {:?}, expected ({ns}, {ni})",
            knowledge.rewards.shape()
        )));
    }
    let b0 = config.initial_belief::<T>(ns)?;
    let mut cand_rng = rng_stream(config.seed, CANDIDATE_STREAM);
    let mut history = History {
        actions: Vec::with_capacity(horizon),
        observations: Vec::with_capacity(horizon),
    };
    let mut batch = ViewBatch::new(ni, no);
    let mut records = Vec::new();
    let mut previous_estimate: Option<ParameterEstimate<T>> = None;
    let mut previous_model: Option<PomdpModel<T>> = None;

    let mut k = 0;
    while env.clock() < horizon {
        k += 1;
        let schedule = episode_schedule(k, config.tau1, config.tau2, ni, config.delta);
        let mut rec = EpisodeRecord::new(k, schedule);

        let start = history.actions.len();
        'explore: for action in 0..ni {
            for _ in 0..config.tau1 {
                if env.clock() >= horizon {
                    break 'explore;
                }
                history.play(env, action, StepTag::explore(k))?;
                rec.explored += 1;
            }
        }
        batch.add_segment(&history.actions[start..], &history.observations[start..])?;
        if env.clock() >= horizon {
            records.push(rec);
            break;
        }

        let reference = knowledge
            .label_reference
            .as_deref()
            .or(previous_estimate.as_ref().map(|e| e.omega_hat.as_slice()));
        let estimate = estimator.estimate(&batch, ns, schedule.delta_k, reference);
        let (model, policy_plan) = match estimate {
            Ok(est) => {
                let chosen = match kind {
                    LearnerKind::Seeu => {
                        let choice = optimistic_model(
                            &est,
                            &knowledge.rewards,
                            knowledge.r_max,
                            config.candidates,
                            config.floor,
                            &config.planner,
                            &mut cand_rng,
                        )?;
                        rec.candidate = Some(choice.candidate);
                        rec.source = Some(if choice.fallback {
                            ModelSource::CenterFallback
                        } else {
                            ModelSource::Estimate
                        });
                        (choice.model, choice.plan)
                    }
                    LearnerKind::Etc => {
                        let m = est.to_model(&knowledge.rewards, knowledge.r_max)?;
                        let p = plan(&m, &config.planner)?;
                        rec.source = Some(ModelSource::Estimate);
                        (m, p)
                    }
                };
                rec.estimate = Some(est.clone());
                previous_estimate = Some(est);
                chosen
            }
            Err(e) => {
                warn!("episode {k}: estimation failed ({e}); reusing the last model");
                rec.estimation_error = Some(e.to_string());
                let (m, source) = match &previous_model {
                    Some(m) => (m.clone(), ModelSource::Previous),
                    None => (
                        PomdpModel::uniform(knowledge.rewards.clone(), knowledge.r_max, no)?,
                        ModelSource::Uniform,
                    ),
                };
                rec.source = Some(source);
                let p = plan(&m, &config.planner)?;
                (m, p)
            }
        };
        rec.planned_gain = Some(policy_plan.gain);
        debug!(
            "episode {k}: {} triples, planned gain {}",
            batch.counts().iter().sum::<usize>(),
            policy_plan.gain
        );

        let belief = replay_final(&model, &b0, &history.actions, &history.observations)?;
        let mut filter = BeliefFilter::new(&belief);
        for _ in 0..schedule.exploit_len {
            if env.clock() >= horizon {
                break;
            }
            let action = policy_plan.action_for_probs(filter.belief());
            let obs = history.play(env, action, StepTag::exploit(k))?;
            filter.update(&model, action, obs)?;
            rec.exploited += 1;
        }
        rec.model = Some(model.clone());
        previous_model = Some(model);
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_model;
    use crate::sim::{init_env, EnvState, Phase};

    fn small_config() -> LearnerConfig {
        LearnerConfig {
            tau1: 100,
            tau2: 100.0,
            candidates: 4,
            planner: PlannerConfig::with_resolution(20),
            ..LearnerConfig::default()
        }
    }

    #[test]
    fn schedule_formulas() {
        let s = episode_schedule(1, 5, 8.0, 2, 0.1);
        assert_eq!((s.explore_len, s.exploit_len), (10, 8));
        assert_eq!(s.delta_k, 0.1);
        assert_eq!(episode_schedule(4, 5, 8.0, 2, 0.1).exploit_len, 16);
        assert_eq!(episode_schedule(2, 5, 8.0, 2, 0.1).exploit_len, 12);
        let total: f64 = (1..1000)
            .map(|k| episode_schedule(k, 5, 8.0, 2, 0.1).delta_k)
            .sum();
        assert!(total <= 1.5 * 0.1);
    }

    #[test]
    fn config_validation() {
        let mut c = LearnerConfig::default();
        assert!(c.validate().is_ok());
        c.tau1 = 2;
        assert!(c.validate().is_err());
        c.tau1 = 3;
        c.delta = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn short_horizon_is_pure_exploration() {
        let model = benchmark_model::<f64>();
        let mut env = init_env(&model, &BeliefState::uniform(2), 1).unwrap();
        let cfg = small_config();
        let recs = run_seeu(
            &mut env,
            &Knowledge::from_model(&model),
            &cfg,
            150,
            &mut SpectralEstimator::default(),
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].explored, 150);
        let log = env.log();
        assert!(log.actions[..100].iter().all(|&a| a == 0));
        assert!(log.actions[100..].iter().all(|&a| a == 1));
        assert!(log.episode_marks.iter().all(|t| t.phase == Phase::Explore));
    }

    fn run(
        kind: LearnerKind,
        radius: Option<f64>,
        seed: u64,
        horizon: usize,
    ) -> (EnvState<f64>, Vec<EpisodeRecord<f64>>) {
        let model = benchmark_model::<f64>();
        let mut env = EnvState::new(&model, &BeliefState::uniform(2), seed, 3).unwrap();
        let cfg = small_config();
        let know = Knowledge::from_model(&model);
        let recs = match radius {
            Some(r) => run_episodes(
                kind,
                &mut env,
                &know,
                &cfg,
                horizon,
                &mut FixedEstimator {
                    model: model.clone(),
                    radius_obs: r,
                    radius_trans: r,
                },
            ),
            None => run_episodes(
                kind,
                &mut env,
                &know,
                &cfg,
                horizon,
                &mut SpectralEstimator {
                    config: cfg.spectral(),
                },
            ),
        }
        .unwrap();
        (env, recs)
    }

    #[test]
    fn zero_radius_seeu_matches_etc() {
        let (a, _) = run(LearnerKind::Seeu, Some(0.0), 7, 3000);
        let (b, _) = run(LearnerKind::Etc, Some(0.0), 7, 3000);
        assert_eq!(a.log(), b.log());
    }

    #[test]
    fn episode_accounting_and_determinism() {
        let (env, recs) = run(LearnerKind::Seeu, None, 11, 4000);
        let played: usize = recs.iter().map(|r| r.explored + r.exploited).sum();
        assert_eq!(played, 4000);
        assert_eq!(env.log().len(), 4000);
        for w in recs.windows(2) {
            assert!(w[1].delta_k < w[0].delta_k);
            assert_eq!(w[0].explored, w[0].explore_len);
            assert_eq!(w[0].exploited, w[0].exploit_len);
        }
        let (again, _) = run(LearnerKind::Seeu, None, 11, 4000);
        assert_eq!(env.log(), again.log());
    }

    #[test]
    fn exploration_traces_agree_between_learners() {
        let (a, _) = run(LearnerKind::Seeu, None, 5, 200);
        let (b, _) = run(LearnerKind::Etc, None, 5, 200);
        assert_eq!(a.log(), b.log());
    }

    #[test]
    fn episode_csv_has_expected_columns() {
        let model = benchmark_model::<f64>();
        let (_, recs) = run(LearnerKind::Etc, None, 2, 1500);
        let mut buf = Vec::new();
        write_episode_csv(&recs, Some(&model), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "k,explore_len,exploit_len,delta_k,planned_gain,est_err_p,est_err_omega,source\n"
        ));
        assert_eq!(text.lines().count(), recs.len() + 1);
    }
}

//! Ground-truth simulator.
//!
//! Event order per period `t`: the agent has seen `O_t`, picks `I_t`, earns
//! `R(M_t, I_t)` (logged, never shown to the agent), the hidden state moves to
//! `M_{t+1} ~ P_{I_t}(M_t, .)` and `O_{t+1} ~ Omega(. | M_{t+1}, I_t)` is emitted.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeliefState, PomdpModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

/// Episode bookkeeping attached to every simulated period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTag {
    pub episode: usize,
    pub phase: Phase,
}

impl StepTag {
    pub fn exploit(episode: usize) -> Self {
        Self {
            episode,
            phase: Phase::Exploit,
        }
    }

    pub fn explore(episode: usize) -> Self {
        Self {
            episode,
            phase: Phase::Explore,
        }
    }
}

/// What a learning agent may see of the world: it acts and receives the next
/// observation. Hidden states and rewards are not part of this interface.
pub trait Environment {
    fn num_actions(&self) -> usize;
    fn num_obs(&self) -> usize;
    /// Number of periods already played.
    fn clock(&self) -> usize;
    fn step(&mut self, action: usize, tag: StepTag) -> Result<usize>;
}

/// Full record of a run, including the hidden ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog<T: Real> {
    pub actions: Vec<usize>,
    /// `observations[t]` is the observation emitted after `actions[t]`.
    pub observations: Vec<usize>,
    /// `hidden_states[t]` is the state in which `actions[t]` was taken.
    pub hidden_states: Vec<usize>,
    pub rewards: Vec<T>,
    pub episode_marks: Vec<StepTag>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: usize,
    episode: usize,
    phase: Phase,
    action: usize,
    observation: usize,
    hidden_state: usize,
    reward: f64,
}

impl<T: Real> TrajectoryLog<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Cumulative reward `sum_{t < n} rewards[t]` for every `n = 0..=len`.
    pub fn cumulative_rewards(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rewards.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for r in &self.rewards {
            acc += r.as_f64();
            out.push(acc);
        }
        out
    }

    /// Maximal time-contiguous runs of periods with the given phase, as
    /// `(actions, observations)` slices.
    pub fn phase_segments(&self, phase: Phase) -> Vec<(&[usize], &[usize])> {
        let mut out = Vec::new();
        let mut start = None;
        for t in 0..=self.len() {
            let inside = t < self.len() && self.episode_marks[t].phase == phase;
            match (inside, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push((&self.actions[s..t], &self.observations[s..t]));
                    start = None;
                }
                _ => {}
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in 0..self.len() {
            let tag = self.episode_marks[t];
            w.serialize(TraceRow {
                t,
                episode: tag.episode,
                phase: tag.phase,
                action: self.actions[t],
                observation: self.observations[t],
                hidden_state: self.hidden_states[t],
                reward: self.rewards[t].as_f64(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut log = Self::default();
        let mut r = csv::Reader::from_reader(reader);
        for (expected_t, row) in r.deserialize::<TraceRow>().enumerate() {
            let row = row?;
            if row.t != expected_t {
                return Err(Error::InvalidArgument(format!(
                    "trace rows must be consecutive from t = 0; found t = {} at row {}",
                    row.t, expected_t
                )));
            }
            log.actions.push(row.action);
            log.observations.push(row.observation);
            log.hidden_states.push(row.hidden_state);
            log.rewards.push(T::lit(row.reward));
            log.episode_marks.push(StepTag {
                episode: row.episode,
                phase: row.phase,
            });
        }
        Ok(log)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Deterministic random stream for replication `stream` of base seed `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized, I>(rng: &mut R, probs: I) -> usize
where
    I: IntoIterator<Item = f64>,
{
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last_positive
}

/// Simulator state: owns the true model, the hidden state and the random stream.
#[derive(Debug, Clone)]
pub struct EnvState<T: Real> {
    model: PomdpModel<T>,
    hidden_state: usize,
    last_action: Option<usize>,
    rng: ChaCha8Rng,
    clock: usize,
    log: TrajectoryLog<T>,
}

/// Starts a simulator with `M_0` drawn from `initial` using stream 0 of `seed`.
pub fn init_env<T: Real>(
    model: &PomdpModel<T>,
    initial: &BeliefState<T>,
    seed: u64,
) -> Result<EnvState<T>> {
    EnvState::new(model, initial, seed, 0)
}

impl<T: Real> EnvState<T> {
    pub fn new(
        model: &PomdpModel<T>,
        initial: &BeliefState<T>,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        if initial.len() != model.num_states() {
            return Err(Error::InvalidDistribution(format!(
                "initial distribution has {} entries, model has {} states",
                initial.len(),
                model.num_states()
            )));
        }
        let mut rng = rng_stream(seed, stream);
        let hidden_state = sample_index(&mut rng, initial.probs().iter().map(|p| p.as_f64()));
        Ok(Self {
            model: model.clone(),
            hidden_state,
            last_action: None,
            rng,
            clock: 0,
            log: TrajectoryLog::default(),
        })
    }

    pub fn model(&self) -> &PomdpModel<T> {
        &self.model
    }

    pub fn hidden_state(&self) -> usize {
        self.hidden_state
    }

    pub fn last_action(&self) -> Option<usize> {
        self.last_action
    }

    pub fn log(&self) -> &TrajectoryLog<T> {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog<T> {
        self.log
    }

    /// Plays `action`, returning the next observation and the reward earned.
    pub fn step_env(&mut self, action: usize, tag: StepTag) -> Result<(usize, T)> {
        self.model.check_action(action)?;
        let m = self.hidden_state;
        let reward = self.model.reward(m, action);
        let p = self.model.transition(action);
        let next = sample_index(&mut self.rng, (0..p.ncols()).map(|n| p[(m, n)].as_f64()));
        let w = self.model.observation(action);
        let obs = sample_index(&mut self.rng, (0..w.ncols()).map(|o| w[(next, o)].as_f64()));
        self.log.actions.push(action);
        self.log.observations.push(obs);
        self.log.hidden_states.push(m);
        self.log.rewards.push(reward);
        self.log.episode_marks.push(tag);
        self.hidden_state = next;
        self.last_action = Some(action);
        self.clock += 1;
        Ok((obs, reward))
    }
}

/// Free-function form of [`EnvState::step_env`].
pub fn step_env<T: Real>(env: &mut EnvState<T>, action: usize, tag: StepTag) -> Result<(usize, T)> {
    env.step_env(action, tag)
}

impl<T: Real> Environment for EnvState<T> {
    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn num_obs(&self) -> usize {
        self.model.num_obs()
    }

    fn clock(&self) -> usize {
        self.clock
    }

    fn step(&mut self, action: usize, tag: StepTag) -> Result<usize> {
        self.step_env(action, tag).map(|(obs, _)| obs)
    }
}

/// Runs `policy` for `horizon` periods. The policy sees only past actions and
/// observations; its first call gets empty histories.
pub fn simulate<T, F>(
    model: &PomdpModel<T>,
    initial: &BeliefState<T>,
    mut policy: F,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryLog<T>>
where
    T: Real,
    F: FnMut(&[usize], &[usize]) -> usize,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut env = init_env(model, initial, seed)?;
    let mut actions = Vec::with_capacity(horizon);
    let mut observations = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let action = policy(&actions, &observations);
        if action >= model.num_actions() {
            return Err(Error::PolicyAction {
                step,
                action,
                num_actions: model.num_actions(),
            });
        }
        let (obs, _) = env.step_env(action, StepTag::exploit(0))?;
        actions.push(action);
        observations.push(obs);
    }
    Ok(env.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_model;
    use nalgebra::DMatrix;

    fn uniform() -> BeliefState<f64> {
        BeliefState::uniform(2)
    }

    #[test]
    fn unit_initial_distribution_is_respected() {
        let model = benchmark_model::<f64>();
        for seed in 0..20 {
            let env = init_env(&model, &BeliefState::unit(2, 1), seed).unwrap();
            assert_eq!(env.hidden_state(), 1);
            assert_eq!(env.clock(), 0);
        }
    }

    #[test]
    fn same_seed_same_state() {
        let model = benchmark_model::<f64>();
        let a = init_env(&model, &uniform(), 42).unwrap();
        let b = init_env(&model, &uniform(), 42).unwrap();
        assert_eq!(a.hidden_state(), b.hidden_state());
    }

    #[test]
    fn initial_draw_frequency() {
        let model = benchmark_model::<f64>();
        let n = 100_000;
        let zeros = (0..n)
            .filter(|&s| {
                EnvState::new(&model, &uniform(), 7, s)
                    .unwrap()
                    .hidden_state()
                    == 0
            })
            .count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn deterministic_model_is_predictable() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let w = DMatrix::identity(2, 2);
        let model = PomdpModel::new(
            vec![p],
            vec![w],
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            1.0,
        )
        .unwrap();
        let mut env = init_env(&model, &BeliefState::unit(2, 0), 3).unwrap();
        for t in 0..10 {
            let (obs, reward) = env.step_env(0, StepTag::exploit(0)).unwrap();
            assert_eq!(obs, (t + 1) % 2);
            assert_eq!(reward, if t % 2 == 0 { 1.0 } else { 0.0 });
        }
        assert_eq!(env.clock(), 10);
    }

    #[test]
    fn fixed_action_occupancy_and_observations() {
        let model = benchmark_model::<f64>();
        let mut env = init_env(&model, &uniform(), 11).unwrap();
        let n = 100_000;
        for _ in 0..n {
            env.step_env(0, StepTag::exploit(0)).unwrap();
        }
        let log = env.log();
        let occ0 = log.hidden_states.iter().filter(|&&m| m == 0).count() as f64 / n as f64;
        assert!((occ0 - 9.0 / 17.0).abs() < 0.01);
        // Observations are emitted from the stationary state: (9/17, 8/17) . Omega_1[:, 0].
        let expected = 9.0 / 17.0 * 0.7 + 8.0 / 17.0 * 0.4;
        let obs0 = log.observations.iter().filter(|&&o| o == 0).count() as f64 / n as f64;
        assert!((obs0 - expected).abs() < 0.01);
    }

    #[test]
    fn rewards_match_hidden_states() {
        let model = benchmark_model::<f64>();
        let log = simulate(&model, &uniform(), |a, _| a.len() % 2, 500, 5).unwrap();
        for t in 0..log.len() {
            assert_eq!(
                log.rewards[t],
                model.reward(log.hidden_states[t], log.actions[t])
            );
        }
    }

    #[test]
    fn simulate_matches_manual_stepping() {
        let model = benchmark_model::<f64>();
        let log = simulate(&model, &uniform(), |_, _| 1, 300, 9).unwrap();
        let mut env = init_env(&model, &uniform(), 9).unwrap();
        for _ in 0..300 {
            env.step_env(1, StepTag::exploit(0)).unwrap();
        }
        assert_eq!(&log, env.log());
    }

    #[test]
    fn simulate_rejects_bad_inputs() {
        let model = benchmark_model::<f64>();
        assert!(simulate(&model, &uniform(), |_, _| 0, 0, 1).is_err());
        let err = simulate(
            &model,
            &uniform(),
            |a, _| if a.len() == 3 { 5 } else { 0 },
            10,
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::PolicyAction {
                step: 3,
                action: 5,
                ..
            }
        ));
    }

    #[test]
    fn csv_round_trip_and_segments() {
        let model = benchmark_model::<f64>();
        let mut env = init_env(&model, &uniform(), 1).unwrap();
        for t in 0..12 {
            let tag = if !(4..8).contains(&t) {
                StepTag::explore(t / 8 + 1)
            } else {
                StepTag::exploit(1)
            };
            env.step_env(t % 2, tag).unwrap();
        }
        let log = env.into_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,episode,phase,action,observation,hidden_state,reward\n"));
        let back = TrajectoryLog::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, log);
        let segs = log.phase_segments(Phase::Explore);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].0.len(), 4);
        assert_eq!(segs[1].0, &log.actions[8..12]);
    }
}

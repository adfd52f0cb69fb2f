//! Replicated regret experiments, slope fits and their output files.

mod output;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{
    best_memoryless_policy, run_episodes, run_memoryless, run_random, Knowledge, LearnerConfig,
    LearnerKind, SpectralEstimator,
};
use crate::model::{benchmark_model, BeliefState, PomdpModel};
use crate::planner::{plan, PlannerConfig};
use crate::sim::EnvState;

pub use output::{read_aggregate, read_aggregate_file, svg_chart, AggregateRow};

/// Environment variable that overrides [`ExperimentConfig::output_dir`].
pub const OUTPUT_DIR_ENV: &str = "SEEU_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Seeu,
    Etc,
    Memoryless,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Seeu => "seeu",
            Algorithm::Etc => "etc",
            Algorithm::Memoryless => "memoryless",
            Algorithm::Random => "random",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seeu" => Ok(Algorithm::Seeu),
            "etc" => Ok(Algorithm::Etc),
            "memoryless" => Ok(Algorithm::Memoryless),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Model file; the built-in 2x2x2 benchmark when absent.
    pub model: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub horizons: Vec<usize>,
    pub replications: usize,
    pub learner: LearnerConfig,
    /// Grid resolution of the reference gain.
    pub oracle_resolution: usize,
    /// Law of the first hidden state; uniform when absent.
    pub initial_distribution: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            algorithms: vec![Algorithm::Seeu, Algorithm::Etc, Algorithm::Memoryless],
            horizons: vec![25_000, 50_000, 100_000, 200_000],
            replications: 30,
            learner: LearnerConfig::default(),
            oracle_resolution: 200,
            initial_distribution: None,
            output_dir: PathBuf::from("results"),
            base_seed: 2024,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one horizon is required".into(),
            ));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) || self.horizons[0] == 0 {
            return Err(Error::InvalidArgument(
                "horizons must be positive and strictly increasing".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "replications must be at least 1".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("no algorithms selected".into()));
        }
        self.learner.validate()
    }

    pub fn load_model(&self) -> Result<PomdpModel<f64>> {
        match &self.model {
            Some(p) => PomdpModel::load(p),
            None => Ok(benchmark_model()),
        }
    }

    /// Output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

fn model_key(model: &PomdpModel<f64>, resolution: usize) -> (u64, usize) {
    let text = serde_json::to_string(&model.to_file()).expect("model serializes");
    let mut h = std::collections::hash_map::DefaultHasher::new();
    text.hash(&mut h);
    (h.finish(), resolution)
}

/// Planned gain of `model` at `resolution`, memoized per process.
pub fn oracle_gain(model: &PomdpModel<f64>, resolution: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = model_key(model, resolution);
    if let Some(&g) = cache.lock().expect("cache lock").get(&key) {
        return Ok(g);
    }
    let g = plan(model, &PlannerConfig::with_resolution(resolution))?.gain;
    cache.lock().expect("cache lock").insert(key, g);
    Ok(g)
}

/// Reference gain with the change from halving the resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub gain: f64,
    pub resolution: usize,
    /// `|gain(G) - gain(G / 2)|`.
    pub refinement_delta: f64,
}

pub fn oracle_report(model: &PomdpModel<f64>, resolution: usize) -> Result<OracleReport> {
    let gain = oracle_gain(model, resolution)?;
    let coarse = oracle_gain(model, (resolution / 2).max(1))?;
    Ok(OracleReport {
        gain,
        resolution,
        refinement_delta: (gain - coarse).abs(),
    })
}

/// Regret of one algorithm at every horizon and replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub algorithm: Algorithm,
    pub horizons: Vec<usize>,
    /// Indices of replications that completed.
    pub replications: Vec<usize>,
    /// `regret[r][h]` for completed replication `r` and horizon `h`.
    pub regret: Vec<Vec<f64>>,
    pub oracle_gain: f64,
}

impl RegretCurve {
    pub fn mean(&self, h: usize) -> f64 {
        self.regret.iter().map(|r| r[h]).sum::<f64>() / self.regret.len() as f64
    }

    /// Sample standard deviation over replications divided by `sqrt(n)`.
    pub fn stderr(&self, h: usize) -> f64 {
        let n = self.regret.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean(h);
        let var = self.regret.iter().map(|r| (r[h] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.horizons.len())
            .map(|h| (self.horizons[h] as f64, self.mean(h)))
            .collect()
    }
}

/// `(T + 1) rho - sum_{t <= T} rewards[t]` for each horizon `T`.
pub fn regret_readouts(rewards: &[f64], horizons: &[usize], gain: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(horizons.len());
    let mut acc = 0.0;
    let mut t = 0;
    for &h in horizons {
        if h >= rewards.len() {
            return Err(Error::InvalidArgument(format!(
                "horizon {h} needs {} rewards, only {} recorded",
                h + 1,
                rewards.len()
            )));
        }
        while t <= h {
            acc += rewards[t];
            t += 1;
        }
        out.push((h as f64 + 1.0) * gain - acc);
    }
    Ok(out)
}

/// Seed of the learner's private randomness in replication `rep`.
pub fn learner_seed(base_seed: u64, rep: usize) -> u64 {
    base_seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Plays one replication of `algorithm` for `periods` steps and returns the rewards.
pub fn run_replication(
    algorithm: Algorithm,
    model: &PomdpModel<f64>,
    config: &ExperimentConfig,
    rep: usize,
    periods: usize,
) -> Result<Vec<f64>> {
    let init = match &config.initial_distribution {
        Some(p) => BeliefState::new(p.clone())?,
        None => BeliefState::uniform(model.num_states()),
    };
    let mut env = EnvState::new(model, &init, config.base_seed, rep as u64)?;
    let mut learner = config.learner.clone();
    learner.seed = learner_seed(config.base_seed, rep);
    match algorithm {
        Algorithm::Seeu | Algorithm::Etc => {
            let kind = if algorithm == Algorithm::Seeu {
                LearnerKind::Seeu
            } else {
                LearnerKind::Etc
            };
            let knowledge = Knowledge::from_model(model);
            let mut estimator = SpectralEstimator {
                config: learner.spectral(),
            };
            run_episodes(
                kind,
                &mut env,
                &knowledge,
                &learner,
                periods,
                &mut estimator,
            )?;
        }
        Algorithm::Memoryless => {
            let best = best_memoryless_policy(model)?;
            run_memoryless(&mut env, &best.map, periods)?;
        }
        Algorithm::Random => run_random(&mut env, learner.seed, periods)?,
    }
    Ok(env.into_log().rewards)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationFailure {
    pub algorithm: Algorithm,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub oracle: OracleReport,
    pub memoryless_gain: f64,
    pub curves: Vec<RegretCurve>,
    pub failures: Vec<ReplicationFailure>,
    pub output_dir: PathBuf,
}

impl ExperimentResult {
    pub fn curve(&self, algorithm: Algorithm) -> Option<&RegretCurve> {
        self.curves.iter().find(|c| c.algorithm == algorithm)
    }
}

/// Runs every (algorithm, replication) pair, one trajectory each, and reads
/// the regret off at every horizon. Writes the output files and returns the curves.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let model = config.load_model()?;
    let oracle = oracle_report(&model, config.oracle_resolution)?;
    let memoryless_gain = best_memoryless_policy(&model)?.gain;
    info!(
        "reference gain {:.6} (refinement delta {:.2e}), best memoryless gain {:.6}",
        oracle.gain, oracle.refinement_delta, memoryless_gain
    );
    let periods = config.horizons.last().copied().expect("validated") + 1;
    let jobs: Vec<(Algorithm, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| (0..config.replications).map(move |r| (a, r)))
        .collect();
    let outcomes: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(a, r)| {
            let rewards = run_replication(a, &model, config, r, periods)?;
            regret_readouts(&rewards, &config.horizons, oracle.gain)
        })
        .collect();

    let mut curves: Vec<RegretCurve> = config
        .algorithms
        .iter()
        .map(|&a| RegretCurve {
            algorithm: a,
            horizons: config.horizons.clone(),
            replications: Vec::new(),
            regret: Vec::new(),
            oracle_gain: oracle.gain,
        })
        .collect();
    let mut failures = Vec::new();
    for (&(a, r), outcome) in jobs.iter().zip(outcomes) {
        let curve = curves
            .iter_mut()
            .find(|c| c.algorithm == a)
            .expect("curve exists");
        match outcome {
            Ok(regret) => {
                curve.replications.push(r);
                curve.regret.push(regret);
            }
            Err(e) => {
                warn!("{a} replication {r} failed: {e}");
                failures.push(ReplicationFailure {
                    algorithm: a,
                    replication: r,
                    error: e.to_string(),
                });
            }
        }
    }
    curves.retain(|c| !c.regret.is_empty());

    let result = ExperimentResult {
        oracle,
        memoryless_gain,
        curves,
        failures,
        output_dir: config.resolved_output_dir(),
    };
    output::write_all(config, &result)?;
    Ok(result)
}

/// Least-squares slope of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points_used: usize,
}

pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| {
            let ok = x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite();
            if !ok {
                warn!("dropping point ({x}, {y}) from the log-log fit");
            }
            ok
        })
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = kept.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "log-log fit needs at least 3 positive points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument(
            "log-log fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = kept
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points_used: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_slopes() {
        let pts: Vec<(f64, f64)> = [1e3, 1e4, 1e5, 1e6]
            .iter()
            .map(|&t: &f64| (t, t.powf(2.0 / 3.0)))
            .collect();
        let fit = loglog_slope(&pts).unwrap();
        assert!((fit.slope - 2.0 / 3.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
        let lin: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&t| (t, 3.0 * t)).collect();
        assert!((loglog_slope(&lin).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_points_are_dropped() {
        let pts = [(1.0, 1.0), (2.0, -1.0), (4.0, 4.0), (8.0, 8.0)];
        let fit = loglog_slope(&pts).unwrap();
        assert_eq!(fit.points_used, 3);
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn readouts_include_period_zero() {
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let r = regret_readouts(&rewards, &[0, 2, 3], 2.5).unwrap();
        assert_eq!(r, vec![1.5, 7.5 - 6.0, 10.0 - 10.0]);
        assert!(regret_readouts(&rewards, &[4], 1.0).is_err());
    }

    #[test]
    fn stderr_is_sample_sd_over_sqrt_n() {
        let curve = RegretCurve {
            algorithm: Algorithm::Seeu,
            horizons: vec![10],
            replications: vec![0, 1, 2, 3],
            regret: vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            oracle_gain: 1.0,
        };
        assert_eq!(curve.mean(0), 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((curve.stderr(0) - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.horizons = vec![100, 50];
        assert!(c.validate().is_err());
        c.horizons = vec![50, 100];
        c.replications = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"algorithms": ["memoryless"], "horizons": [10, 20, 40]}"#)
                .unwrap();
        assert_eq!(c.replications, 30);
        assert_eq!(c.learner.tau1, 200);
        assert_eq!(c.algorithms, vec![Algorithm::Memoryless]);
    }

    #[test]
    fn constant_reward_oracle() {
        let model = benchmark_model::<f64>();
        let flat = PomdpModel::new(
            model.transitions().to_vec(),
            model.observations().to_vec(),
            nalgebra::DMatrix::from_element(2, 2, 0.75),
            1.0,
        )
        .unwrap();
        assert!((oracle_gain(&flat, 10).unwrap() - 0.75).abs() < 1e-9);
    }
}

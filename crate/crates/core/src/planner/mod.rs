//! Average-reward planning on a discretized belief simplex, and the
//! optimistic search over a confidence region.

mod grid;
mod mdp;

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::synthetic::{perturb_rows, RadiusMode, RowNorm};
use crate::model::{BeliefState, PomdpModel};
use crate::scalar::Real;
use crate::spectral::ParameterEstimate;

pub use grid::{BeliefGrid, DEFAULT_POINT_CAP};
pub use mdp::{
    bellman_residual, induced_mdp, relative_value_iteration, FiniteBeliefMdp, RviSolution,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub resolution: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub point_cap: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 50,
            tol: 1e-6,
            max_iter: 100_000,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

impl PlannerConfig {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }
}

/// Gain, bias and greedy policy on a belief grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPlan<T: Real> {
    pub gain: T,
    pub bias: Vec<T>,
    pub policy: Vec<usize>,
    pub residual: T,
    pub iterations: usize,
    pub grid: BeliefGrid,
}

#[derive(Debug, Serialize)]
struct PlanSummary {
    gain: f64,
    residual: f64,
    iterations: usize,
    resolution: usize,
    num_points: usize,
    bias_span: f64,
}

impl<T: Real> BeliefPlan<T> {
    /// Action prescribed at the grid point nearest to `b`.
    pub fn action_for(&self, b: &BeliefState<T>) -> usize {
        self.policy[self.grid.nearest(b.probs())]
    }

    pub fn action_for_probs(&self, b: &[T]) -> usize {
        self.policy[self.grid.nearest(b)]
    }

    pub fn bias_span(&self) -> T {
        let hi = self.bias.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let lo = self.bias.iter().copied().fold(hi, |a, b| a.min(b));
        hi - lo
    }

    /// One row per grid point: coordinates `b0..`, `bias`, `action`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.grid.num_states();
        let header: Vec<String> = (0..m)
            .map(|k| format!("b{k}"))
            .chain(["bias".to_string(), "action".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for id in 0..self.grid.len() {
            let coords: Vec<String> = self
                .grid
                .point::<f64>(id)
                .iter()
                .map(|x| x.to_string())
                .collect();
            writeln!(
                w,
                "{},{},{}",
                coords.join(","),
                self.bias[id].as_f64(),
                self.policy[id]
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let s = PlanSummary {
            gain: self.gain.as_f64(),
            residual: self.residual.as_f64(),
            iterations: self.iterations,
            resolution: self.grid.resolution(),
            num_points: self.grid.len(),
            bias_span: self.bias_span().as_f64(),
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("{stem}.csv")),
        )?))?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            self.summary_json()? + "\n",
        )?;
        Ok(())
    }
}

/// Grid, induced MDP and relative value iteration in one call.
pub fn plan<T: Real>(model: &PomdpModel<T>, config: &PlannerConfig) -> Result<BeliefPlan<T>> {
    let grid = BeliefGrid::new(model.num_states(), config.resolution, config.point_cap)?;
    let mdp = induced_mdp(model, &grid)?;
    let sol = relative_value_iteration(&mdp, config.tol, config.max_iter)?;
    Ok(BeliefPlan {
        gain: sol.gain,
        bias: sol.bias,
        policy: sol.policy,
        residual: sol.residual,
        iterations: sol.iterations,
        grid,
    })
}

/// Result of the optimistic search.
#[derive(Debug, Clone)]
pub struct OptimisticChoice<T: Real> {
    pub model: PomdpModel<T>,
    pub plan: BeliefPlan<T>,
    /// 0 is the center, `k >= 1` the `k`-th sampled candidate.
    pub candidate: usize,
    /// Gain of every candidate, `None` where planning failed.
    pub gains: Vec<Option<T>>,
    /// Every sampled candidate failed and the center was used.
    pub fallback: bool,
}

/// Samples `budget` models around `center` (rows moved within the L2
/// transition radius and the L1 observation radius, then projected with
/// `floor`) and returns the one whose plan has the largest gain. The center is
/// always a candidate; ties keep the earlier candidate.
pub fn optimistic_model<T: Real, R: Rng + ?Sized>(
    center: &ParameterEstimate<T>,
    rewards: &DMatrix<T>,
    r_max: T,
    budget: usize,
    floor: f64,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<OptimisticChoice<T>> {
    let center_model = center.to_model(rewards, r_max)?;
    let mut models = vec![center_model.clone()];
    for _ in 0..budget {
        let ps = center
            .p_hat
            .iter()
            .zip(&center.radii_trans)
            .map(|(p, &r)| perturb_rows(rng, p, r, RowNorm::L2, RadiusMode::Within, floor))
            .collect();
        let ws = center
            .omega_hat
            .iter()
            .zip(&center.radii_obs)
            .map(|(w, &r)| perturb_rows(rng, w, r, RowNorm::L1, RadiusMode::Within, floor))
            .collect();
        match center_model.with_parameters(ps, ws) {
            Ok(m) => models.push(m),
            Err(e) => {
                warn!("discarding optimistic candidate: {e}");
                models.push(center_model.clone());
            }
        }
    }
    let plans: Vec<Result<BeliefPlan<T>>> = models.par_iter().map(|m| plan(m, config)).collect();
    let gains: Vec<Option<T>> = plans
        .iter()
        .map(|p| p.as_ref().ok().map(|p| p.gain))
        .collect();
    let mut best: Option<usize> = None;
    for (k, g) in gains.iter().enumerate() {
        if let Some(g) = g {
            if best.is_none_or(|b| *g > gains[b].expect("best has a gain")) {
                best = Some(k);
            }
        }
    }
    let fallback = budget > 0 && gains[1..].iter().all(Option::is_none);
    if fallback {
        warn!("every optimistic candidate failed; using the center estimate");
    }
    let Some(best) = best else {
        let mut plans = plans;
        return Err(plans.swap_remove(0).expect_err("center failed"));
    };
    let mut plans = plans;
    let chosen = plans
        .swap_remove(best)
        .map_err(|_| Error::InvalidArgument("chosen candidate lost its plan".into()))?;
    Ok(OptimisticChoice {
        model: models.swap_remove(best),
        plan: chosen,
        candidate: best,
        gains,
        fallback,
    })
}

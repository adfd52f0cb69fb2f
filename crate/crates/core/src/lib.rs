//! Online learning in partially observable Markov decision processes under
//! the long-run average reward criterion.
//!
//! The crate contains the model and belief filter ([`model`]), a simulator
//! ([`sim`]), a spectral estimator of the hidden dynamics ([`spectral`]), a
//! belief-grid planner ([`planner`]), the episodic learners and baselines
//! ([`learners`]) and a replicated regret experiment runner ([`harness`]).
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar for the common cases.
//!
//! ```
//! use seeu_core::{benchmark_model, plan, PlannerConfig};
//!
//! let model = benchmark_model::<f64>();
//! let p = plan(&model, &PlannerConfig::with_resolution(20)).unwrap();
//! assert!(p.gain > 0.0 && p.gain <= model.r_max());
//! ```

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod scalar;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{benchmark_model, BeliefState, PomdpModel};
pub use planner::{plan, BeliefPlan, PlannerConfig};
pub use scalar::Real;

pub type Model = model::PomdpModel<f64>;
pub type Belief = model::BeliefState<f64>;
pub type Plan = planner::BeliefPlan<f64>;
pub type Estimate = spectral::ParameterEstimate<f64>;
pub type Trajectory = sim::TrajectoryLog<f64>;
pub type Env = sim::EnvState<f64>;

pub type Model32 = model::PomdpModel<f32>;
pub type Belief32 = model::BeliefState<f32>;
pub type Plan32 = planner::BeliefPlan<f32>;
pub type Estimate32 = spectral::ParameterEstimate<f32>;

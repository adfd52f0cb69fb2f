use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("observation {obs} has zero likelihood under action {action}{}", step_suffix(*.step))]
    ZeroLikelihood {
        action: usize,
        obs: usize,
        step: Option<usize>,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("action {action}: only {available} view triples, need {required}")]
    InsufficientSamples {
        action: usize,
        available: usize,
        required: usize,
    },

    #[error("ill-conditioned estimate{}: {detail}", action_suffix(*.action))]
    Conditioning {
        action: Option<usize>,
        detail: String,
    },

    #[error("relative value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("belief grid would have {points} points, cap is {cap}")]
    Capacity { points: u128, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "policy returned action {action} at step {step}, but only {num_actions} actions exist"
    )]
    PolicyAction {
        step: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn step_suffix(step: Option<usize>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}

fn action_suffix(action: Option<usize>) -> String {
    action
        .map(|a| format!(" for action {a}"))
        .unwrap_or_default()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid action {action} (environment has {n_actions} actions)")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutOfRange { x: f64, y: f64 },

    #[error("behavior policy has no support for action {action} in state {state}")]
    SupportViolation { state: usize, action: usize },

    #[error("step sizes violate alpha_theta < alpha_z < alpha_w: {0}")]
    StepSizeOrdering(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("importance-weighted variance kernel does not contract (spectral radius {radius})")]
    NotContracting { radius: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("numerical blow-up: {0}")]
    Diverged(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

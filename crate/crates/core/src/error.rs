use thiserror::Error;

use crate::extremal::Trajectory;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("domain error in `{expr}`: {message}")]
    Domain { expr: String, message: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("invalid multipliers: {0}")]
    InvalidMultipliers(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("total time derivative needs the rate of `{0}` but the group declares no uDot")]
    MissingControlRate(String),

    #[error("control law: {0}")]
    ControlLaw(String),

    #[error("integration failed at t = {time}: {message}")]
    Integration {
        time: f64,
        message: String,
        partial: Box<Trajectory>,
    },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingDiverged {
        iterations: usize,
        residual: f64,
        best_psi: Vec<f64>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

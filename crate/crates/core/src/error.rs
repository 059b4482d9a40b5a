use thiserror::Error;

use crate::profile::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree profile: {}", join(.0))]
    InvalidProfile(Vec<Violation>),

    #[error("infeasible quantization: {0}")]
    Infeasible(String),

    #[error("could not realize simple graph / girth > 4: {0}")]
    GraphConstruction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no messages")]
    NoMessages,

    #[error("j_inverse is unbounded at I = {0}")]
    Unbounded(f64),

    #[error("threshold search bracket failure: {0}")]
    Bracket(String),

    #[error("target BER {target:e} not bracketed (attainable range {min:e} .. {max:e})")]
    NotBracketed { target: f64, min: f64, max: f64 },

    #[error("cancelled")]
    Cancelled,

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

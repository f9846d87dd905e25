use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which hardware bound a rejected candidate exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintAxis {
    Params,
    Flops,
}

impl std::fmt::Display for ConstraintAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintAxis::Params => f.write_str("max_params"),
            ConstraintAxis::Flops => f.write_str("max_flops"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse architecture string {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error(
        "no feasible architecture after {attempts} attempts; tightest constraint {axis} = {bound} \
         (smallest observed value {best_seen})"
    )]
    Infeasible {
        attempts: usize,
        axis: ConstraintAxis,
        bound: u64,
        best_seen: u64,
    },

    #[error("population cannot be filled: only {found} distinct feasible architectures found, need {needed}")]
    PopulationExhausted { found: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss {loss} for sub-network {config}")]
    NonFiniteLoss { config: String, loss: f64 },

    #[error("evaluation of {config} failed: {reason}")]
    Evaluation { config: String, reason: String },

    #[error("bad container file: {0}")]
    Format(String),

    #[error("skeleton hash mismatch: file has {found:016x}, expected {expected:016x}")]
    SkeletonMismatch { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

use thiserror::Error;

use crate::train::TrajectoryLog;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("layer {layer} is identically zero; balancing is undefined")]
    ZeroLayer { layer: usize },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: usize, right: usize },

    #[error("arity mismatch: outer network takes {expected} inputs, {got} components given")]
    ArityMismatch { expected: usize, got: usize },

    #[error("network has zero path-norm proxy")]
    DegenerateNet,

    #[error("training diverged at step {step} (risk {risk:e})")]
    Diverged {
        step: usize,
        risk: f64,
        log: Box<TrajectoryLog>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

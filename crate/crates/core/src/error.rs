use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("elements live on different grids ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid subgroup: {0}")]
    InvalidSubgroup(String),

    #[error("not a representation: {0}")]
    NotARepresentation(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unknown capsule '{0}'")]
    UnknownCapsule(String),

    #[error("nonlinearity '{nonlinearity}' is not admissible for capsule '{capsule}'")]
    Inadmissible { capsule: String, nonlinearity: String },

    #[error("fiber mismatch: expected {expected}, found {found}")]
    FiberMismatch { expected: String, found: String },

    #[error("type-system violation at layer {layer}: {reason}")]
    TypeSystem { layer: usize, reason: String },

    #[error("type-system violation: cannot add fibers {left} and {right}")]
    NotAddable { left: String, right: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parameter utilization undefined: Hom space is zero-dimensional")]
    UndefinedUtilization,

    #[error("explicit matrix of side {size} exceeds the materialization guard {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("training diverged: {0}")]
    TrainingFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

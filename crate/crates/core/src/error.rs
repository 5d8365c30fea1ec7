use thiserror::Error;

/// Errors raised across the prognostics, decision, and training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numeric overflow while evaluating {0}")]
    NumericOverflow(String),
    #[error("degenerate distribution: every unnormalized mass underflowed (scale={scale}, shape={shape})")]
    DegenerateDistribution { scale: f64, shape: f64 },
    #[error("value {value} lies outside the support 1..={horizon}")]
    OutOfSupport { value: u32, horizon: usize },
    #[error("support mismatch: {0} vs {1}")]
    SupportMismatch(usize, usize),
    #[error(
        "infinite divergence: reference mass is zero at {0} where the target has positive mass"
    )]
    InfiniteDivergence(u32),
    #[error("no feasible maintenance window satisfies the failure tolerance {alpha}")]
    Infeasible { alpha: f64 },
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at step {step}: loss {loss}")]
    TrainingDiverged { step: u64, loss: f64 },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by operators, proximity maps, metrics and the solver loop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate}, relative gap {gap:e})")]
    NormNotConverged {
        iterations: usize,
        estimate: f64,
        gap: f64,
    },

    #[error("zero {kind} {index} in the stacked operator; diagonal step is undefined")]
    ZeroLine { kind: &'static str, index: usize },

    #[error("step {step} is not constant on block {block} of the non-separable proximity map")]
    NonConstantBlockStep { block: usize, step: usize },

    #[error("block count mismatch: problem has {expected} blocks, state has {actual}")]
    BlockCount { expected: usize, actual: usize },

    #[error("metric rejected: {0}")]
    MetricRejected(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

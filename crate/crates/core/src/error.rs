use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("tape error: {0}")]
    Tape(String),

    #[error("stale or incomplete trace: {0}")]
    Trace(String),

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(&'static str),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("case {index}: {source}")]
    Case {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

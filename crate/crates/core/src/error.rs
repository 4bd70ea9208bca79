use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no cost rule or measured entry resolves layer kind `{kind}` (layer {layer})")]
    UnknownLayerKind { layer: usize, kind: String },

    #[error("cut {cut} is out of range 0..={n}")]
    CutOutOfRange { cut: usize, n: usize },

    #[error("layer range [{lo}, {hi}) is out of bounds for {n} layers")]
    RangeOutOfBounds { lo: usize, hi: usize, n: usize },

    #[error("bandwidth must be positive, got {0} B/s")]
    ZeroBandwidth(f64),

    #[error("history has {len} samples, need more than {needed}")]
    InsufficientHistory { len: usize, needed: usize },

    #[error("predictor expects {expected} samples, got {got}")]
    WrongWindowLength { expected: usize, got: usize },

    #[error("cut {0} has no parameter-sharing pool (edge-only and cloud-only splits are degenerate)")]
    DegenerateCut(usize),

    #[error("cut {cut} is not a candidate of the pool covering layers [{lo}, {hi})")]
    CutNotInPool { cut: usize, lo: usize, hi: usize },

    #[error("trace has {len} samples, the episode needs {needed}")]
    TraceTooShort { len: usize, needed: usize },

    #[error("invalid model spec `{name}`: {violations}")]
    InvalidModel { name: String, violations: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Both states have zero target density, so the Metropolis-Hastings
    /// distance between them has no meaning.
    #[error("undefined density ratio: both states have zero target density")]
    UndefinedRatio,

    #[error("distance evaluation failed for pool pair ({i}, {j}): {cause}")]
    PairDistance { i: usize, j: usize, cause: Box<Error> },

    #[error("distance {distance} does not apply to {variant} states")]
    UnsupportedDistance {
        distance: &'static str,
        variant: &'static str,
    },

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("no draws fall inside the histogram support")]
    EmptyHistogram,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("{stage}: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            cause: Box::new(self),
        }
    }

    /// Strips stage labels and pair annotations down to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { cause, .. } | Error::PairDistance { cause, .. } => cause.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

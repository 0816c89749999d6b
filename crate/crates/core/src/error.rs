use std::io;

use thiserror::Error;

/// Errors raised by the pipeline.
///
/// Every variant maps onto a stable upper-case code (see [`Error::code`]) that
/// the command-line front end prints alongside the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    NonuniformRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("unsupported file header `{0}`")]
    VersionMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid band {low_hz}..{high_hz} Hz (order {order}, fs {fs} Hz)")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        order: usize,
        fs: f64,
    },

    #[error("designed filter is unstable")]
    Unstable,

    #[error("no epochs could be extracted ({skipped} cues skipped)")]
    EmptyResult { skipped: usize },

    #[error("trial has zero signal energy")]
    ZeroSignal,

    #[error("too few trials: {0}")]
    TooFewTrials(String),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("rank deficient: only {usable} usable dimensions, {required} required")]
    RankDeficient { usable: usize, required: usize },

    #[error("pooled covariance is singular")]
    Singular,

    #[error("epoch has zero total variance")]
    DegenerateEpoch,

    #[error("length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("nothing to evaluate")]
    Empty,

    #[error("window of {window_s} s does not fit in {duration_s} s of signal")]
    WindowTooLong { window_s: f64, duration_s: f64 },

    #[error("invalid session spec: {0}")]
    InvalidSpec(String),

    #[error("could not bind {endpoint}: {source}")]
    BindFailed {
        endpoint: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARG",
            Error::OutOfRange(_) => "OUT_OF_RANGE",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::NonuniformRow { .. } => "NONUNIFORM_ROW",
            Error::VersionMismatch(_) => "VERSION_MISMATCH",
            Error::DimMismatch(_) => "DIM_MISMATCH",
            Error::InvalidBand { .. } => "INVALID_BAND",
            Error::Unstable => "UNSTABLE",
            Error::EmptyResult { .. } => "EMPTY_RESULT",
            Error::ZeroSignal => "ZERO_SIGNAL",
            Error::TooFewTrials(_) => "TOO_FEW_TRIALS",
            Error::TooFewSamples(_) => "TOO_FEW_SAMPLES",
            Error::NumericFailure(_) => "NUMERIC_FAILURE",
            Error::RankDeficient { .. } => "RANK_DEFICIENT",
            Error::Singular => "SINGULAR",
            Error::DegenerateEpoch => "DEGENERATE_EPOCH",
            Error::LengthMismatch(..) => "LENGTH_MISMATCH",
            Error::Empty => "EMPTY",
            Error::WindowTooLong { .. } => "WINDOW_TOO_LONG",
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::BindFailed { .. } => "BIND_FAILED",
            Error::Io(_) => "IO_ERROR",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

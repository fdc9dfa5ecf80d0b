use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch on axis {axis}: {left} vs {right}")]
    GridMismatch { axis: usize, left: usize, right: usize },
    #[error("spacing mismatch on axis {axis}: {left} vs {right}")]
    SpacingMismatch { axis: usize, left: f64, right: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("data length {actual} does not match voxel count {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at voxel {index} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dimensionality: {0}")]
    DimensionUnsupported(String),
    #[error("value {value} is not representable as {datatype}")]
    NotRepresentable { value: f32, datatype: &'static str },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config value out of range for `{key}`: {value}")]
    OutOfRange { key: String, value: String },
    #[error("cannot parse config line {line}: {text}")]
    ParseFailure { line: usize, text: String },
    #[error("malformed report: {0}")]
    Report(String),

    #[error("component count exceeds label capacity")]
    TooManyComponents,
    #[error("unknown component label {0}")]
    UnknownLabel(u32),
    #[error("lung mask is empty")]
    EmptyLungMask,

    #[error("ROI box does not match grid: {0}")]
    BoxMismatch(String),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("negative uncertainty {value} at voxel {index}")]
    NegativeUncertainty { index: usize, value: f64 },

    #[error("sequence lengths differ: {0} vs {1}")]
    SequenceLengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("zero variance in input")]
    DegenerateVariance,
    #[error("empty input")]
    EmptyInput,

    #[error("phantom spec infeasible: {0}")]
    SpecInfeasible(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

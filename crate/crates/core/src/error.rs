use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("value error at row {row}, col {col}: {message}")]
    Value {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("row {row} has zero norm, no row state exists")]
    ZeroNorm { row: usize },

    #[error("index {index} out of range for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("mapping {mapping} is not available on a {kind} store")]
    IncompatibleMapping { mapping: String, kind: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("point {index} has no neighbors")]
    IsolatedPoint { index: usize },

    #[error("row {index} is degenerate: 1^T C^+ 1 = {value:e}")]
    DegenerateRow { index: usize, value: f64 },

    #[error("operator is not unitary: ||U^dag U - I|| = {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("operator dimension {found} does not match target dimension {expected}")]
    Dimension { expected: usize, found: usize },

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("outcome {outcome} of register `{register}` has zero probability")]
    ImpossibleOutcome { register: String, outcome: usize },

    #[error("value {value} needs {required_bits} bits but the register holds {available_bits}")]
    Representation {
        value: f64,
        required_bits: u32,
        available_bits: u32,
    },

    #[error("initial state has no overlap with the good subspace")]
    NoOverlap,

    #[error("branch ({i}, {j}): {message}")]
    Branch { i: usize, j: usize, message: String },

    #[error("branch ({i}, {j}) has a zero difference vector")]
    ZeroDifference { i: usize, j: usize },

    #[error("post-selection probability {probability:e} below floor {floor:e}")]
    PostSelection { probability: f64, floor: f64 },

    #[error("block-encoding check failed: deviation {deviation:e} exceeds {tolerance:e}")]
    Construction { deviation: f64, tolerance: f64 },

    #[error("input has weight {residual:e} outside the nonzero eigenspace")]
    Span { residual: f64 },

    #[error("state has imaginary amplitude {imag:e}, tomography needs real amplitudes")]
    RealAmplitude { imag: f64 },

    #[error("no qualifying value left to find")]
    Exhausted,

    #[error("no neighbor pairs found (estimated K = {estimate})")]
    NoNeighbors { estimate: f64 },

    #[error("precision error: {0}")]
    Precision(String),

    #[error("input is not confined to the right-singular sector: leakage {leakage:e}")]
    Embedding { leakage: f64 },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("pipeline step {step}: {source}")]
    Step {
        step: u8,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline step that produced it.
    pub fn at_step(self, step: u8) -> Self {
        match self {
            already @ Error::Step { .. } => already,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    /// Pipeline step recorded by [`Error::at_step`].
    pub fn step(&self) -> Option<u8> {
        match self {
            Error::Step { step, .. } => Some(*step),
            _ => None,
        }
    }

    /// Short machine-readable name used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Value { .. } => "value",
            Error::EmptyInput => "empty-input",
            Error::Invariant(_) => "invariant",
            Error::ZeroNorm { .. } => "zero-norm",
            Error::Bounds { .. } => "bounds",
            Error::IncompatibleMapping { .. } => "incompatible-mapping",
            Error::Parameter(_) => "parameter",
            Error::IsolatedPoint { .. } => "isolated-point",
            Error::DegenerateRow { .. } => "degenerate-row",
            Error::NotUnitary { .. } => "unitarity",
            Error::Dimension { .. } => "dimension",
            Error::UnknownRegister(_) => "unknown-register",
            Error::ImpossibleOutcome { .. } => "impossible-outcome",
            Error::Representation { .. } => "representation",
            Error::NoOverlap => "no-overlap",
            Error::Branch { .. } => "branch",
            Error::ZeroDifference { .. } => "zero-difference",
            Error::PostSelection { .. } => "post-selection",
            Error::Construction { .. } => "construction",
            Error::Span { .. } => "span",
            Error::RealAmplitude { .. } => "real-amplitude",
            Error::Exhausted => "exhausted",
            Error::NoNeighbors { .. } => "no-neighbors",
            Error::Precision(_) => "precision",
            Error::Embedding { .. } => "embedding",
            Error::Comparison(_) => "comparison",
            Error::Fit(_) => "fit",
            Error::Step { source, .. } => source.kind(),
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

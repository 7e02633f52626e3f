use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),
    #[error("transportation simplex exceeded its pivot budget of {0}")]
    PivotBudget(usize),
    #[error("infeasible transport plan: {0}")]
    Infeasible(String),

    #[error("empty codebook")]
    EmptyCodebook,
    #[error("codeword index {index} out of range for codebook of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("usage counts are all zero")]
    ZeroCounts,

    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: need {needed} bytes, have {actual}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        actual: usize,
    },
    #[error("dimension overflow in {path}: extents {dims:?}")]
    DimensionOverflow { path: PathBuf, dims: Vec<u32> },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("batch size {batch} exceeds dataset size {len}")]
    BatchTooLarge { batch: usize, len: usize },

    #[error("numeric failure at iteration {iteration}: {detail}")]
    Numeric { iteration: u64, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("type mismatch for key `{key}`: {detail}")]
    TypeMismatch { key: String, detail: String },
    #[error("unknown method `{0}` (expected \"vqvae\" or \"vqwae\")")]
    UnknownMethod(String),
    #[error("invalid value for key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the CLI: 1 config, 2 numeric, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::DimensionOverflow { .. }
            | Error::CountMismatch { .. }
            | Error::Checkpoint(_) => 3,
            _ => 2,
        }
    }
}

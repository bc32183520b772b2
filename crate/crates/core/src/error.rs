use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| exceeds tolerance")]
    NotSymmetric { i: usize, j: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated file ({detail})")]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: label {label} out of range at record {record}")]
    BadLabel {
        path: PathBuf,
        record: usize,
        label: u8,
    },

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("{}", describe_config_error(*.line, .key, .msg))]
    Config {
        line: usize,
        key: String,
        msg: String,
    },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn describe_config_error(line: usize, key: &str, msg: &str) -> String {
    if line == 0 {
        format!("config error, key `{key}`: {msg}")
    } else {
        format!("config error at line {line}, key `{key}`: {msg}")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            line: 0,
            key: key.into(),
            msg: msg.into(),
        }
    }
}

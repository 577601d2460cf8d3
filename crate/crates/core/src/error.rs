use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dataset too small to split: {0} rows, need at least 10")]
    TooSmallToSplit(usize),

    #[error("row {row}: expected {expected} values, found {found}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("row {row} field {field}: index {index} outside [{lo}, {hi})")]
    IndexOutOfRange {
        row: usize,
        field: usize,
        index: usize,
        lo: usize,
        hi: usize,
    },

    #[error("batch normalization in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("backward called without a matching forward pass")]
    NoForwardCache,

    #[error("AUC undefined: labels contain a single class")]
    AucUndefined,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(left: impl Into<String>, right: impl Into<String>) -> Error {
    Error::Shape {
        left: left.into(),
        right: right.into(),
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HomfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HomfError {
    #[error("row index {row} ≥ {n_rows} in triplet ({row}, {col}, {value})")]
    RowOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        n_rows: usize,
    },

    #[error("column index {col} ≥ {n_cols} in triplet ({row}, {col}, {value})")]
    ColumnOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        n_cols: usize,
    },

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("negative weight {value} at ({row}, {col}); graph weights must be non-negative")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("{which} side graph is not symmetric at ({row}, {col})")]
    NotSymmetric {
        which: &'static str,
        row: usize,
        col: usize,
    },

    #[error("exponential weighting overflow guard: |{value}| > 700")]
    ExpOverflow { value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("auc needs both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("every user was skipped (no relevant test items)")]
    NoEvaluableUsers,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0} is empty")]
    EmptyInput(String),

    #[error("cannot draw {requested} negatives: only {available} unobserved cells")]
    TooDense { requested: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bad embedding file: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HomfError>,
    },
}

impl HomfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HomfError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        HomfError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}

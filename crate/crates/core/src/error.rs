use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which side of a block pair an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockSide {
    X,
    Y,
}

impl std::fmt::Display for BlockSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockSide::X => f.write_str("X"),
            BlockSide::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{label}` has (near) zero standard deviation")]
    ConstantColumn { label: String },

    #[error("blocks disagree on observation count: X has {x} rows, Y has {y}")]
    ObservationMismatch { x: usize, y: usize },

    #[error("{block} block is rank deficient: {detail}")]
    RankDeficient { block: BlockSide, detail: String },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("correlation bundle was built without omega; CCA needs full-rank within-block matrices")]
    MissingOmega,

    #[error("operation requires a {expected} model, got {found}")]
    MethodMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resample {iteration} stayed degenerate after {attempts} redraws: {reason}")]
    DegenerateResample {
        iteration: usize,
        attempts: usize,
        reason: String,
    },

    #[error("requested R² {r2} for component {component} cannot be realized: {detail}")]
    InfeasibleR2 {
        component: usize,
        r2: f64,
        detail: String,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: non-numeric cell {value:?} at row {row}, column {col}")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("{path}: parse error at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("report has no `{0}` section")]
    MissingSection(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerical content of the data
    /// (rank deficiency, degenerate resamples), as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::MissingOmega
                | Error::DegenerateResample { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; the CLI maps variants to
//! stable machine-readable codes via [`Error::code`].

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("multi-vector `{id}` has no tokens")]
    EmptyTokens { id: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("multi-vector `{id}` token {token} coordinate {coord} is not finite")]
    NonFiniteValue {
        id: String,
        token: usize,
        coord: usize,
    },

    #[error("identifier is empty")]
    EmptyId,

    #[error("duplicate document id `{id}`")]
    DuplicateId { id: String },

    #[error("binary precision requires dim divisible by 8, got {dim}")]
    BinaryDimNotByteAligned { dim: usize },

    #[error("index contains no documents")]
    EmptyIndex,

    #[error("pooled embedding of `{id}` is the zero vector")]
    ZeroVector { id: String },

    #[error("k must be at least 1")]
    NonPositiveK,

    #[error("projection needs more than {target_dim} sample vectors, got {got}")]
    InsufficientSample { target_dim: usize, got: usize },

    #[error("sample has {rank} nonzero singular values, projection needs {target_dim}")]
    RankDeficient { rank: usize, target_dim: usize },

    #[error("source dim {source_dim} must exceed reduction target {target_dim}")]
    InsufficientTargetReduction {
        source_dim: usize,
        target_dim: usize,
    },

    #[error("k = {k} exceeds point count {points}")]
    KTooLarge { k: usize, points: usize },

    #[error("degenerate data: {reason}")]
    DegenerateData { reason: String },

    #[error("no teacher score recorded for positive `{positive_id}`")]
    MissingPositiveScore { positive_id: String },

    #[error("teacher similarity for `{doc_id}` is not finite")]
    NonFiniteScore { doc_id: String },

    #[error("parameter `{name}` shape differs between merge members")]
    ShapeMismatch { name: String },

    #[error("merge members do not share the same parameter names")]
    NameSetMismatch,

    #[error("gradients require DOT similarity")]
    GradientRequiresDot,

    #[error("temperature must be positive, got {tau}")]
    NonPositiveTemperature { tau: f64 },

    #[error("no query has a judged-relevant document")]
    NoJudgedQueries,

    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    FormatError { path: PathBuf, reason: String },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable code string for diagnostics and the CLI error protocol.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyTokens { .. } => "EmptyTokens",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::EmptyId => "EmptyId",
            Error::DuplicateId { .. } => "DuplicateId",
            Error::BinaryDimNotByteAligned { .. } => "BinaryDimNotByteAligned",
            Error::EmptyIndex => "EmptyIndex",
            Error::ZeroVector { .. } => "ZeroVector",
            Error::NonPositiveK => "NonPositiveK",
            Error::InsufficientSample { .. } => "InsufficientSample",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::InsufficientTargetReduction { .. } => "InsufficientTargetReduction",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::DegenerateData { .. } => "DegenerateData",
            Error::MissingPositiveScore { .. } => "MissingPositiveScore",
            Error::NonFiniteScore { .. } => "NonFiniteScore",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NameSetMismatch => "NameSetMismatch",
            Error::GradientRequiresDot => "GradientRequiresDot",
            Error::NonPositiveTemperature { .. } => "NonPositiveTemperature",
            Error::NoJudgedQueries => "NoJudgedQueries",
            Error::IoFailure { .. } => "IoFailure",
            Error::FormatError { .. } => "FormatError",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::FormatError {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

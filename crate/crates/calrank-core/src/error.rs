//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A delimited input file failed to parse. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An interaction referenced an item missing from the catalog.
    #[error("line {line}: item {item:?} is not in the catalog")]
    UnknownRawItem { item: String, line: usize },

    /// A dense item id fell outside the catalog.
    #[error("item id {item} out of range (catalog has {num_items} items)")]
    UnknownItem { item: u32, num_items: usize },

    /// A configuration value violated its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// KL divergence is undefined: the first argument puts mass where the
    /// second has none.
    #[error("KL divergence diverges: p has mass on category {category} but q does not")]
    Divergence { category: usize },

    /// A numeric invariant broke (NaN/inf where finite values are required).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A checkpoint was written by a newer format than this build reads.
    #[error("unsupported checkpoint format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// Structural problems in otherwise well-formed input (duplicate users,
    /// mismatched array lengths, domain mismatches between maps, ...).
    #[error("invalid data: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

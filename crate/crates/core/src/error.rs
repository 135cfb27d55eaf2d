//! Error types shared across the crate.

use crate::so3::Pose;
use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Quaternion norm too close to zero to normalize.
    #[error("degenerate quaternion: norm {norm:e} below 1e-12")]
    DegenerateQuaternion { norm: f64 },

    /// Two objects that must share a joint count do not.
    #[error("dimension mismatch: expected {expected} joints, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Model parameter shapes inconsistent with a skeleton or checkpoint header.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Not enough data points for the requested operation.
    #[error("insufficient data: need at least {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },

    /// A non-finite value appeared where a finite one is required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid configuration (weights, fractions, masks, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Structured file-format failures; each corruption mode is distinct.
    #[error(transparent)]
    Format(#[from] FormatError),

    /// Pose sampling exhausted its retry budget; carries what was accepted.
    #[error("sampling error: retry budget exhausted after accepting {} poses", accepted.len())]
    Sampling { accepted: Vec<Pose> },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// File-format corruption categories for the binary dataset and checkpoint formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("invalid field encoding: {0}")]
    InvalidField(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use alloc::string::String;

/// Errors raised by the matching and evaluation kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("zero vector")]
    ZeroVector,
    #[error("descriptor has no valid patches")]
    NoValidPatches,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("empty library")]
    EmptyLibrary,
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("empty template list")]
    EmptyTemplates,
    #[error("invalid proposal: {0}")]
    InvalidProposal(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("RLE length mismatch: counts sum to {got}, expected {expected}")]
    RleLengthMismatch { expected: u64, got: u64 },
    #[error("non-canonical RLE: zero run at position {0}")]
    RleNonCanonical(usize),
    #[error("mask size mismatch: {a:?} vs {b:?}")]
    MaskSizeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("undefined IoU: both masks are empty")]
    UndefinedIou,
    #[error("score matrix has no objects")]
    NoObjects,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

use thiserror::Error;

/// Errors raised by the analysis and synthesis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("antenna subset is empty")]
    EmptySubset,

    #[error("antenna index {index} out of range for {n_ant} antennas")]
    AntennaIndex { index: usize, n_ant: usize },

    #[error("duplicate antenna index {0} in subset")]
    DuplicateAntenna(usize),

    #[error("subset of {requested} antennas exceeds the {available} available")]
    SubsetTooLarge { requested: usize, available: usize },

    #[error("subset does not match the subset the tensor was normalized over")]
    SubsetMismatch,

    #[error("total channel power is zero")]
    ZeroPower,

    #[error("non-finite coefficient at flat index {0}")]
    NonFinite(usize),

    #[error("lost-sample mask has length {mask}, expected {n_time}")]
    MaskLength { mask: usize, n_time: usize },

    #[error("tensor carries flagged lost samples; interpolate or drop them first")]
    UnhandledLostSamples,

    #[error("every time sample is masked")]
    AllMasked,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("OAM order {l} outside truncation bound |l| <= {l_max}")]
    ModeOutOfRange { l: i32, l_max: u32 },

    #[error("state needs at least one amplitude entry")]
    EmptyEntries,

    #[error("cannot normalize a zero-norm state")]
    ZeroNorm,

    #[error("truncation bounds differ: {left} vs {right}")]
    TruncationMismatch { left: u32, right: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("truncation would drop amplitude {amplitude:.3e} at l = {l}")]
    AmplitudeLoss { l: i32, amplitude: f64 },

    #[error("transmission {name} = {value} must lie in (0, 1]")]
    InvalidTransmission { name: &'static str, value: f64 },

    #[error("non-finite {name}: {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("{input} input carries cross-polarized amplitude {leak:.3e}")]
    CrossPolarizedLeakage { input: &'static str, leak: f64 },

    #[error("tied angle mismatch: {what} ({expected} vs {found})")]
    AngleMismatch { what: &'static str, expected: f64, found: f64 },

    #[error("invalid intensities: {0}")]
    InvalidIntensities(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image has no dominant angular harmonic")]
    NoDominantHarmonic,
}

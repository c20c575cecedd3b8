use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal is empty")]
    EmptySignal,

    #[error("sample rate mismatch: config expects {expected} Hz, audio is {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("need at least {needed} channels, got {actual}")]
    TooFewChannels { needed: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mel band {band} has no support on the linear frequency axis")]
    EmptyBand { band: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix trace is zero")]
    ZeroTrace,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty feature stream")]
    EmptyStream,

    #[error("frequency shift {shift} exceeds maximum {max}")]
    ShiftTooLarge { shift: i32, max: u32 },

    #[error("swap transform has {expected} channels, input has {actual}")]
    PermutationMismatch { expected: usize, actual: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("feature file: {0}")]
    FeatureFile(String),

    #[error("{path}:{line}: {message}")]
    Annotation { path: PathBuf, line: u64, message: String },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("signal is empty or shorter than one frame")]
    EmptySignal,
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("spectrum bin count mismatch: expected {expected}, got {actual}")]
    SpectrumMismatch { expected: usize, actual: usize },
    #[error("feature sequence is empty")]
    EmptyFeatures,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
    #[error("wav i/o: {0}")]
    Wav(String),
}

pub type Result<T> = std::result::Result<T, AudioError>;

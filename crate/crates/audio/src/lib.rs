//! Speech front-end for the edge assistant gateway.
//!
//! Raw microphone samples go through echo cancellation, spectral
//! denoising, late-reverb suppression and voice activity segmentation
//! before they are handed to speech recognition. A wake-word gate keeps
//! the chain idle until the enrolled phrase is heard.

pub mod aec;
pub mod denoise;
pub mod dereverb;
pub mod error;
pub mod frame;
pub mod mfcc;
pub mod pipeline;
pub mod spectrum;
pub mod stream;
pub mod vad;
pub mod wake;
pub mod wav;

pub use aec::{aec_nlms, EchoCancellerConfig, EchoCancellerState, EchoOutput};
pub use denoise::{estimate_noise, spectral_subtract, DenoiseConfig, NoiseProfile};
pub use dereverb::{dereverb, DereverbConfig, Dereverberator};
pub use error::{AudioError, Result};
pub use frame::{frame_signal, AudioFrame};
pub use mfcc::{mfcc, MfccExtractor};
pub use pipeline::{
    process_utterance, CleanUtterance, Frontend, FrontendConfig, SpeechSegment, Stage, StageSet,
};
pub use spectrum::{Spectrum, Stft};
pub use stream::WakeGatedStream;
pub use vad::{Vad, VadConfig, VadDecision};
pub use wake::{detect_wakeword, dtw_distance, WakeConfig, WakeMode, WakeState};

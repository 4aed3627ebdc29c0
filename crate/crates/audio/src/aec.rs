//! NLMS acoustic echo canceller.
//!
//! The adaptive filter follows the textbook normalized LMS update. The
//! canceller output can optionally be taken from a second, "foreground" copy
//! of the taps that is only refreshed from the adaptive filter when the
//! adaptive filter is doing clearly better over a block. During double talk
//! the adaptive taps get perturbed by the near-end signal; the foreground
//! keeps the last good echo-path estimate.

use serde::{Deserialize, Serialize};

use crate::error::{AudioError, Result};
use crate::frame::{clamp_sample, AudioFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoCancellerConfig {
    pub taps: usize,
    pub step_size: f64,
    pub regularizer: f64,
    /// Emit the foreground-filter output instead of the raw adaptive error.
    pub two_path: bool,
    /// Block length over which foreground and adaptive errors are compared.
    pub compare_block: usize,
    /// Copy adaptive taps to the foreground when
    /// `E_adaptive < ratio * E_foreground` and `E_adaptive < ratio * E_mic`.
    pub copy_ratio: f64,
}

impl Default for EchoCancellerConfig {
    fn default() -> Self {
        Self {
            taps: 256,
            step_size: 0.5,
            regularizer: 1e-6,
            two_path: true,
            compare_block: 128,
            copy_ratio: 0.5,
        }
    }
}

impl EchoCancellerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(AudioError::InvalidConfig("aec taps must be > 0".into()));
        }
        if !(0.0..2.0).contains(&self.step_size) {
            return Err(AudioError::InvalidConfig(format!(
                "aec step size must lie in [0, 2), got {}",
                self.step_size
            )));
        }
        if !(self.regularizer > 0.0) {
            return Err(AudioError::InvalidConfig("aec regularizer must be > 0".into()));
        }
        if self.compare_block == 0 {
            return Err(AudioError::InvalidConfig("aec compare_block must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-sample outputs of both filter paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EchoOutput {
    /// What the canceller emits (foreground error when two-path is enabled).
    pub output: Vec<f64>,
    /// Error of the adaptive NLMS filter, `mic - weights . history`.
    pub adaptive_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EchoCancellerState {
    weights: Vec<f64>,
    foreground: Vec<f64>,
    step_size_mu: f64,
    regularizer_eps: f64,
    two_path: bool,
    compare_block: usize,
    copy_ratio: f64,
    // mirrored ring: newest reference sample at history[pos], window is history[pos..pos + L]
    history: Vec<f64>,
    pos: usize,
    block_fill: usize,
    energy_adaptive: f64,
    energy_foreground: f64,
    energy_mic: f64,
}

impl EchoCancellerState {
    pub fn new(config: &EchoCancellerConfig) -> Result<Self> {
        config.validate()?;
        Self::with_weights(config, vec![0.0; config.taps])
    }

    /// Starts from known taps (both paths).
    pub fn with_weights(config: &EchoCancellerConfig, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.taps {
            return Err(AudioError::InvalidConfig(format!(
                "expected {} taps, got {}",
                config.taps,
                weights.len()
            )));
        }
        let taps = config.taps;
        Ok(Self {
            foreground: weights.clone(),
            weights,
            step_size_mu: config.step_size,
            regularizer_eps: config.regularizer,
            two_path: config.two_path,
            compare_block: config.compare_block,
            copy_ratio: config.copy_ratio,
            history: vec![0.0; 2 * taps],
            pos: 0,
            block_fill: 0,
            energy_adaptive: 0.0,
            energy_foreground: 0.0,
            energy_mic: 0.0,
        })
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn foreground_weights(&self) -> &[f64] {
        &self.foreground
    }

    pub fn step_size(&self) -> f64 {
        self.step_size_mu
    }

    /// The last `L` reference samples, newest first.
    pub fn reference_history(&self) -> &[f64] {
        &self.history[self.pos..self.pos + self.taps()]
    }

    fn push_reference(&mut self, x: f64) {
        let taps = self.taps();
        self.pos = if self.pos == 0 { taps - 1 } else { self.pos - 1 };
        self.history[self.pos] = x;
        self.history[self.pos + taps] = x;
    }

    fn step(&mut self, mic: f64, reference: f64) -> (f64, f64) {
        self.push_reference(reference);
        let taps = self.taps();
        let window = &self.history[self.pos..self.pos + taps];

        let estimate: f64 = self.weights.iter().zip(window).map(|(w, x)| w * x).sum();
        let error = mic - estimate;
        let norm: f64 = window.iter().map(|x| x * x).sum();
        let gain = self.step_size_mu * error / (norm + self.regularizer_eps);
        if gain != 0.0 {
            for (w, x) in self.weights.iter_mut().zip(window) {
                *w += gain * x;
            }
        }

        if !self.two_path {
            return (error, error);
        }

        let fg_estimate: f64 = self.foreground.iter().zip(window).map(|(w, x)| w * x).sum();
        let fg_error = mic - fg_estimate;
        self.energy_adaptive += error * error;
        self.energy_foreground += fg_error * fg_error;
        self.energy_mic += mic * mic;
        self.block_fill += 1;
        if self.block_fill == self.compare_block {
            if self.energy_adaptive < self.copy_ratio * self.energy_foreground
                && self.energy_adaptive < self.copy_ratio * self.energy_mic
            {
                self.foreground.copy_from_slice(&self.weights);
            }
            self.block_fill = 0;
            self.energy_adaptive = 0.0;
            self.energy_foreground = 0.0;
            self.energy_mic = 0.0;
        }
        (fg_error, error)
    }

    /// Runs the canceller over aligned microphone and playback-reference blocks.
    pub fn cancel_detailed(&mut self, mic: &[f64], reference: &[f64]) -> Result<EchoOutput> {
        if mic.len() != reference.len() {
            return Err(AudioError::FrameMismatch(format!(
                "mic has {} samples, reference has {}",
                mic.len(),
                reference.len()
            )));
        }
        let mut out = EchoOutput {
            output: Vec::with_capacity(mic.len()),
            adaptive_error: Vec::with_capacity(mic.len()),
        };
        for (&d, &x) in mic.iter().zip(reference) {
            let (o, e) = self.step(d, x);
            out.output.push(if o.is_finite() { o } else { 0.0 });
            out.adaptive_error.push(e);
        }
        Ok(out)
    }

    pub fn cancel(&mut self, mic: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cancel_detailed(mic, reference)?.output)
    }
}

/// Frame-level wrapper: removes the echo of `reference_frame` from `mic_frame`.
pub fn aec_nlms(
    mic_frame: &AudioFrame,
    reference_frame: &AudioFrame,
    state: &mut EchoCancellerState,
) -> Result<AudioFrame> {
    if mic_frame.len() != reference_frame.len() {
        return Err(AudioError::FrameMismatch(format!(
            "mic frame has {} samples, reference frame has {}",
            mic_frame.len(),
            reference_frame.len()
        )));
    }
    if mic_frame.sample_rate_hz != reference_frame.sample_rate_hz {
        return Err(AudioError::FrameMismatch(format!(
            "sample rates differ: {} vs {}",
            mic_frame.sample_rate_hz, reference_frame.sample_rate_hz
        )));
    }
    let out = state.cancel(&mic_frame.samples, &reference_frame.samples)?;
    Ok(AudioFrame {
        samples: out.into_iter().map(clamp_sample).collect(),
        sample_rate_hz: mic_frame.sample_rate_hz,
        index: mic_frame.index,
    })
}

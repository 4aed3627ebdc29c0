//! Late-reverberation suppression from delayed, decayed power estimates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{AudioError, Result};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DereverbConfig {
    /// Fraction of the delayed smoothed power attributed to late reverb, in [0, 1).
    pub decay_gamma: f64,
    /// Lag, in frames, between a frame and the power it is predicted from.
    pub delay_frames: usize,
    /// Spectral floor as a fraction of the input power.
    pub floor_beta: f64,
    /// Recursive smoothing of the per-bin power history.
    pub smoothing: f64,
}

impl Default for DereverbConfig {
    fn default() -> Self {
        Self {
            decay_gamma: 0.4,
            delay_frames: 3,
            floor_beta: 0.05,
            smoothing: 0.5,
        }
    }
}

impl DereverbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_gamma >= 0.0 && self.decay_gamma < 1.0) {
            return Err(AudioError::InvalidConfig(
                "dereverb decay_gamma must lie in [0, 1)".into(),
            ));
        }
        if !(self.floor_beta > 0.0 && self.floor_beta < 1.0) {
            return Err(AudioError::InvalidConfig(
                "dereverb floor_beta must lie in (0, 1)".into(),
            ));
        }
        if !(self.smoothing >= 0.0 && self.smoothing < 1.0) {
            return Err(AudioError::InvalidConfig(
                "dereverb smoothing must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps the ring of recent smoothed power spectra for one stream.
#[derive(Debug, Clone)]
pub struct Dereverberator {
    config: DereverbConfig,
    smoothed: Option<Vec<f64>>,
    history: VecDeque<Vec<f64>>,
    frames_seen: usize,
}

impl Dereverberator {
    pub fn new(config: DereverbConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            smoothed: None,
            history: VecDeque::new(),
            frames_seen: 0,
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// `R = gamma * S[t - D]`; output power `max(P - R, beta * P)`.
    pub fn process(&mut self, spectrum: &Spectrum) -> Result<Spectrum> {
        let power = spectrum.power();
        if let Some(prev) = &self.smoothed {
            spectrum.check_bins(prev.len())?;
        }
        let delay = self.config.delay_frames;

        let out = if delay == 0 {
            // no lag: predict from the current smoothed power
            let s = self.update_smoothed(&power);
            self.suppress(spectrum, &power, &s)
        } else {
            let out = if self.history.len() == delay {
                let lagged = self.history.front().expect("history holds delay frames");
                self.suppress(spectrum, &power, lagged)
            } else {
                spectrum.clone()
            };
            let s = self.update_smoothed(&power);
            self.history.push_back(s);
            if self.history.len() > delay {
                self.history.pop_front();
            }
            out
        };
        self.frames_seen += 1;
        Ok(out)
    }

    fn update_smoothed(&mut self, power: &[f64]) -> Vec<f64> {
        let a = self.config.smoothing;
        let next: Vec<f64> = match &self.smoothed {
            Some(prev) => prev
                .iter()
                .zip(power)
                .map(|(s, p)| a * s + (1.0 - a) * p)
                .collect(),
            None => power.to_vec(),
        };
        self.smoothed = Some(next.clone());
        next
    }

    fn suppress(&self, spectrum: &Spectrum, power: &[f64], lagged: &[f64]) -> Spectrum {
        let gamma = self.config.decay_gamma;
        if gamma == 0.0 {
            return spectrum.clone();
        }
        let beta = self.config.floor_beta;
        let magnitudes = power
            .iter()
            .zip(lagged)
            .zip(&spectrum.magnitudes)
            .map(|((&p, &s), &m)| ((p - gamma * s).max(beta * p)).sqrt().min(m))
            .collect();
        Spectrum {
            magnitudes,
            phases: spectrum.phases.clone(),
        }
    }
}

/// Frame-wise dereverberation of a spectrum sequence with a fresh history.
pub fn dereverb(spectra: &[Spectrum], config: &DereverbConfig) -> Result<Vec<Spectrum>> {
    let mut d = Dereverberator::new(config.clone())?;
    spectra.iter().map(|s| d.process(s)).collect()
}

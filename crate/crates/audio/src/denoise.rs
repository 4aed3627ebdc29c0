//! Noise tracking and power spectral subtraction.

use serde::{Deserialize, Serialize};

use crate::error::{AudioError, Result};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Over-subtraction factor, >= 1.
    pub alpha: f64,
    /// Spectral floor as a fraction of the input power, in (0, 1).
    pub beta: f64,
    /// Exponential smoothing of the noise estimate.
    pub smoothing: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.05,
            smoothing: 0.95,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(AudioError::InvalidConfig("denoise alpha must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(AudioError::InvalidConfig("denoise beta must lie in (0, 1)".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing < 1.0) {
            return Err(AudioError::InvalidConfig(
                "denoise smoothing must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Running estimate of the noise power per frequency bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub noise_psd: Vec<f64>,
    pub frames_observed: u64,
    pub oversubtraction_alpha: f64,
    pub floor_beta: f64,
    pub smoothing: f64,
}

impl NoiseProfile {
    pub fn new(bin_count: usize, config: &DenoiseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            noise_psd: vec![0.0; bin_count],
            frames_observed: 0,
            oversubtraction_alpha: config.alpha,
            floor_beta: config.beta,
            smoothing: config.smoothing,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.noise_psd.len()
    }

    /// Folds one noise-only spectrum into the estimate.
    ///
    /// The estimate is the exponentially weighted mean of all observed frame
    /// powers, normalized by the total weight so far: after `n` frames with
    /// smoothing `s` the weight of frame `k` is `(1-s) s^(n-k) / (1 - s^n)`.
    pub fn observe(&mut self, spectrum: &Spectrum) -> Result<()> {
        spectrum.check_bins(self.bin_count())?;
        let s = self.smoothing;
        let n = self.frames_observed + 1;
        let total = 1.0 - s.powf(n as f64);
        let previous = 1.0 - s.powf((n - 1) as f64);
        for (psd, mag) in self.noise_psd.iter_mut().zip(&spectrum.magnitudes) {
            let power = mag * mag;
            *psd = (s * previous * *psd + (1.0 - s) * power) / total;
        }
        self.frames_observed = n;
        Ok(())
    }
}

/// Updates `profile` from the frames not marked as speech.
pub fn estimate_noise<'a, I>(frames: I, profile: &mut NoiseProfile) -> Result<()>
where
    I: IntoIterator<Item = (&'a Spectrum, bool)>,
{
    for (spectrum, is_speech) in frames {
        if !is_speech {
            profile.observe(spectrum)?;
        }
    }
    Ok(())
}

/// Per bin: `max(P - alpha * N, beta * P)`, phase kept.
pub fn spectral_subtract(spectrum: &Spectrum, profile: &NoiseProfile) -> Result<Spectrum> {
    spectrum.check_bins(profile.bin_count())?;
    let alpha = profile.oversubtraction_alpha;
    let beta = profile.floor_beta;
    let magnitudes = spectrum
        .magnitudes
        .iter()
        .zip(&profile.noise_psd)
        .map(|(&m, &noise)| {
            let power = m * m;
            let out = (power - alpha * noise).max(beta * power);
            // sqrt(m^2) can round above m; never hand back more than came in
            out.sqrt().min(m)
        })
        .collect();
    Ok(Spectrum {
        magnitudes,
        phases: spectrum.phases.clone(),
    })
}

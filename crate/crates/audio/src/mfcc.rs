//! Mel-frequency cepstral coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{AudioError, Result};
use crate::frame::AudioFrame;
use crate::spectrum::hann_window;

pub const DEFAULT_MEL_BANDS: usize = 26;
/// Floor applied before the log so silent bands stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced evenly on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_bands + 2` corner frequencies in Hz.
    edges_hz: Vec<f64>,
    /// Per band: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_bands: usize, fft_len: usize, sample_rate_hz: u32) -> Result<Self> {
        if n_bands == 0 || fft_len < 2 || sample_rate_hz == 0 {
            return Err(AudioError::InvalidConfig(
                "mel filterbank needs bands > 0, fft_len >= 2, sample_rate > 0".into(),
            ));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64))
            .collect();
        let bins = fft_len / 2 + 1;
        let bin_hz = sample_rate_hz as f64 / fft_len as f64;
        let filters = (0..n_bands)
            .map(|b| {
                let (lo, mid, hi) = (edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]);
                let weights: Vec<(usize, f64)> = (0..bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |(k, _)| *k);
                (first, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        Ok(Self { edges_hz, filters })
    }

    pub fn n_bands(&self) -> usize {
        self.filters.len()
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, weights)| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * power.get(first + i).copied().unwrap_or(0.0))
                    .sum()
            })
            .collect()
    }
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct2(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Reusable extractor for a fixed frame length and sample rate.
#[derive(Clone)]
pub struct MfccExtractor {
    frame_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("frame_len", &self.frame_len)
            .field("bands", &self.filterbank.n_bands())
            .finish()
    }
}

impl MfccExtractor {
    pub fn new(frame_len: usize, sample_rate_hz: u32, n_bands: usize) -> Result<Self> {
        let filterbank = MelFilterbank::new(n_bands, frame_len, sample_rate_hz)?;
        Ok(Self {
            frame_len,
            window: hann_window(frame_len),
            fft: FftPlanner::new().plan_fft_forward(frame_len),
            filterbank,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn power_spectrum(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.frame_len {
            return Err(AudioError::FrameMismatch(format!(
                "expected {} samples, got {}",
                self.frame_len,
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex64::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.frame_len / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect())
    }

    pub fn mel_energies(&self, samples: &[f64]) -> Result<Vec<f64>> {
        Ok(self.filterbank.apply(&self.power_spectrum(samples)?))
    }

    pub fn compute(&self, frame: &AudioFrame, n_coeffs: usize) -> Result<Vec<f64>> {
        if n_coeffs > self.filterbank.n_bands() {
            return Err(AudioError::InvalidConfig(format!(
                "n_coeffs {} exceeds mel band count {}",
                n_coeffs,
                self.filterbank.n_bands()
            )));
        }
        let log_mel: Vec<f64> = self
            .mel_energies(&frame.samples)?
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        Ok(dct2(&log_mel, n_coeffs))
    }

    /// MFCCs of every frame in `frames`.
    pub fn sequence(&self, frames: &[AudioFrame], n_coeffs: usize) -> Result<Vec<Vec<f64>>> {
        frames.iter().map(|f| self.compute(f, n_coeffs)).collect()
    }
}

/// One-shot MFCC with the default 26-band filterbank.
pub fn mfcc(frame: &AudioFrame, n_coeffs: usize) -> Result<Vec<f64>> {
    MfccExtractor::new(frame.len(), frame.sample_rate_hz, DEFAULT_MEL_BANDS)?
        .compute(frame, n_coeffs)
}

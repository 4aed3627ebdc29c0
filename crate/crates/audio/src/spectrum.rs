use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{AudioError, Result};

/// Magnitude/phase form of one analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl Spectrum {
    pub fn from_power(power: &[f64], phases: Vec<f64>) -> Self {
        Self {
            magnitudes: power.iter().map(|p| p.max(0.0).sqrt()).collect(),
            phases,
        }
    }

    pub fn zeros(bin_count: usize) -> Self {
        Self {
            magnitudes: vec![0.0; bin_count],
            phases: vec![0.0; bin_count],
        }
    }

    pub fn bin_count(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn power(&self) -> Vec<f64> {
        self.magnitudes.iter().map(|m| m * m).collect()
    }

    pub(crate) fn check_bins(&self, expected: usize) -> Result<()> {
        if self.bin_count() != expected || self.phases.len() != expected {
            return Err(AudioError::SpectrumMismatch {
                expected,
                actual: self.bin_count(),
            });
        }
        Ok(())
    }
}

pub fn bin_count(frame_len: usize) -> usize {
    frame_len / 2 + 1
}

/// Periodic Hann window; at 50% overlap the shifted copies sum to one.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Windowed real FFT analysis and plain inverse synthesis for one frame size.
#[derive(Clone)]
pub struct Stft {
    frame_len: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft")
            .field("frame_len", &self.frame_len)
            .finish()
    }
}

impl Stft {
    pub fn new(frame_len: usize) -> Result<Self> {
        if frame_len < 2 {
            return Err(AudioError::InvalidConfig(
                "frame_len must be at least 2 for spectral analysis".into(),
            ));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            frame_len,
            window: hann_window(frame_len),
            forward: planner.plan_fft_forward(frame_len),
            inverse: planner.plan_fft_inverse(frame_len),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn bin_count(&self) -> usize {
        bin_count(self.frame_len)
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Hann-windows `samples` and returns the one-sided spectrum.
    pub fn analyze(&self, samples: &[f64]) -> Result<Spectrum> {
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
        self.forward.process(&mut buf);
        let bins = self.bin_count();
        Ok(Spectrum {
            magnitudes: buf[..bins].iter().map(|c| c.norm()).collect(),
            phases: buf[..bins].iter().map(|c| c.arg()).collect(),
        })
    }

    /// Inverse transform of a one-sided spectrum; no synthesis window.
    pub fn synthesize(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let bins = self.bin_count();
        spectrum.check_bins(bins)?;
        let n = self.frame_len;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (slot, (&m, &ph)) in buf.iter_mut().zip(spectrum.magnitudes.iter().zip(&spectrum.phases)) {
            *slot = Complex64::from_polar(m, ph);
        }
        // DC and Nyquist must be real for a real signal
        buf[0] = Complex64::new(buf[0].re, 0.0);
        if n.is_multiple_of(2) {
            buf[n / 2] = Complex64::new(buf[n / 2].re, 0.0);
        }
        for k in 1..n - bins + 1 {
            buf[n - k] = buf[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_synthesis_returns_windowed_frame() {
        let stft = Stft::new(512).unwrap();
        let x: Vec<f64> = (0..512).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
        let spec = stft.analyze(&x).unwrap();
        assert_eq!(spec.bin_count(), 257);
        let y = stft.synthesize(&spec).unwrap();
        for ((a, b), w) in x.iter().zip(&y).zip(stft.window()) {
            assert!((a * w - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hann_overlap_sums_to_one() {
        let w = hann_window(512);
        for n in 0..256 {
            assert!((w[n] + w[n + 256] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bin_mismatch_rejected() {
        let stft = Stft::new(64).unwrap();
        let bad = Spectrum::zeros(10);
        assert!(matches!(
            stft.synthesize(&bad),
            Err(AudioError::SpectrumMismatch { expected: 33, actual: 10 })
        ));
    }
}

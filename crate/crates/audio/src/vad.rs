//! Adaptive energy / zero-crossing voice activity detection with hangover.

use serde::{Deserialize, Serialize};

use crate::frame::AudioFrame;

/// Energy reported for an all-zero frame.
pub const ENERGY_FLOOR_DB: f64 = -120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    /// Required excess over the tracked noise floor.
    pub margin_db: f64,
    /// Frames kept "speech" after the last raw speech frame.
    pub hangover_frames: u32,
    /// Zero-crossing rate band (crossings per sample) typical of voiced speech.
    pub zcr_low: f64,
    pub zcr_high: f64,
    /// A frame with in-band ZCR still needs this much energy above the floor.
    pub zcr_min_excess_db: f64,
    /// Noise floor before any frame has been observed.
    pub initial_floor_db: f64,
    /// Lowest value the tracked floor may take.
    pub min_floor_db: f64,
    /// Exponential smoothing applied to the floor during non-speech frames.
    pub floor_smoothing: f64,
    /// Per-frame pull of the floor toward the frame energy during speech,
    /// so a floor that started too low eventually catches up.
    pub speech_leak: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            margin_db: 6.0,
            hangover_frames: 8,
            zcr_low: 0.02,
            zcr_high: 0.30,
            zcr_min_excess_db: 3.0,
            initial_floor_db: -45.0,
            min_floor_db: -90.0,
            floor_smoothing: 0.95,
            speech_leak: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadDecision {
    pub is_speech: bool,
    pub energy_db: f64,
    pub hangover_remaining: u32,
}

pub fn frame_energy_db(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return ENERGY_FLOOR_DB;
    }
    let mean_sq = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    if mean_sq <= 0.0 {
        ENERGY_FLOOR_DB
    } else {
        (10.0 * mean_sq.log10()).max(ENERGY_FLOOR_DB)
    }
}

/// Sign changes per sample; exact zeros do not count as a change.
pub fn zero_crossing_rate(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let crossings = samples
        .windows(2)
        .filter(|w| (w[0] > 0.0 && w[1] < 0.0) || (w[0] < 0.0 && w[1] > 0.0))
        .count();
    crossings as f64 / (samples.len() - 1) as f64
}

/// Stateful detector: one instance per stream, fed frames in order.
#[derive(Debug, Clone)]
pub struct Vad {
    config: VadConfig,
    noise_floor_db: f64,
    hangover: u32,
}

impl Vad {
    pub fn new(config: VadConfig) -> Self {
        Self {
            noise_floor_db: config.initial_floor_db,
            config,
            hangover: 0,
        }
    }

    pub fn noise_floor_db(&self) -> f64 {
        self.noise_floor_db
    }

    pub fn config(&self) -> &VadConfig {
        &self.config
    }

    pub fn compute(&mut self, frame: &AudioFrame) -> VadDecision {
        self.compute_samples(&frame.samples)
    }

    pub fn compute_samples(&mut self, samples: &[f64]) -> VadDecision {
        let cfg = &self.config;
        let energy_db = frame_energy_db(samples);
        let zcr = zero_crossing_rate(samples);
        let excess = energy_db - self.noise_floor_db;
        let zcr_in_band = zcr >= cfg.zcr_low && zcr <= cfg.zcr_high;
        let raw_speech =
            excess > cfg.margin_db || (zcr_in_band && excess > cfg.zcr_min_excess_db);

        let is_speech = if raw_speech {
            self.hangover = cfg.hangover_frames;
            true
        } else if self.hangover > 0 {
            self.hangover -= 1;
            true
        } else {
            false
        };

        self.track_floor(energy_db, raw_speech);

        VadDecision {
            is_speech,
            energy_db,
            hangover_remaining: self.hangover,
        }
    }

    fn track_floor(&mut self, energy_db: f64, raw_speech: bool) {
        let cfg = &self.config;
        let floor = self.noise_floor_db;
        let next = if energy_db < floor {
            energy_db
        } else if !raw_speech {
            cfg.floor_smoothing * floor + (1.0 - cfg.floor_smoothing) * energy_db
        } else {
            floor + cfg.speech_leak * (energy_db - floor)
        };
        self.noise_floor_db = next.max(cfg.min_floor_db);
    }
}

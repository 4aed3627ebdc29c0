#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FS: f64 = 16_000.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white(seed: u64, n: usize, sigma: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let dist = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| dist.sample(&mut r)).collect()
}

pub fn uniform(seed: u64, n: usize, amp: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-amp..amp)).collect()
}

/// White noise through a one-pole low-pass, scaled to `rms`.
pub fn speech_shaped_noise(seed: u64, n: usize, rms: f64) -> Vec<f64> {
    let w = white(seed, n, 1.0);
    let mut y = Vec::with_capacity(n);
    let mut state = 0.0;
    for x in w {
        state = 0.9 * state + x;
        y.push(state);
    }
    scale_to_rms(&mut y, rms);
    y
}

pub fn sine(hz: f64, n: usize, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * hz * i as f64 / FS).sin())
        .collect()
}

/// Harmonic source with a syllabic envelope that drops to zero between syllables.
pub fn synthetic_speech(seed: u64, n: usize, rms: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let f0 = r.random_range(110.0..160.0);
    let syllable_hz = r.random_range(2.5..3.5);
    let phase0 = r.random_range(0.0..2.0 * PI);
    let phases: Vec<f64> = (0..20).map(|_| r.random_range(0.0..2.0 * PI)).collect();
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let vibrato = 1.0 + 0.03 * (2.0 * PI * 5.0 * t).sin();
            let env = (2.0 * PI * syllable_hz * t + phase0).sin().max(0.0).powi(2);
            let voiced: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, ph)| {
                    let h = (k + 1) as f64;
                    (2.0 * PI * f0 * h * vibrato * t + ph).sin() / h
                })
                .sum();
            env * voiced
        })
        .collect();
    scale_to_rms(&mut y, rms);
    y
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

pub fn scale_to_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn delay(x: &[f64], d: usize, gain: f64) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for i in d..x.len() {
        y[i] = gain * x[i - d];
    }
    y
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Mean per-frame SNR of `estimate` against `clean`, over frames where the
/// clean signal carries energy. Frame SNRs are clamped to [-10, 35] dB.
pub fn segmental_snr(clean: &[f64], estimate: &[f64], frame: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    let max_energy = clean
        .chunks(frame)
        .map(energy)
        .fold(0.0f64, f64::max);
    for (c, e) in clean.chunks(frame).zip(estimate.chunks(frame)) {
        let sig = energy(c);
        if sig <= max_energy * 1e-3 {
            continue;
        }
        let err: f64 = c.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = if err == 0.0 { 35.0 } else { db(sig / err) };
        total += snr.clamp(-10.0, 35.0);
        count += 1;
    }
    total / count.max(1) as f64
}

/// Frame-level F1 of predicted speech labels against the truth.
pub fn f1(truth: &[bool], predicted: &[bool]) -> f64 {
    let tp = truth.iter().zip(predicted).filter(|(t, p)| **t && **p).count() as f64;
    let fp = truth.iter().zip(predicted).filter(|(t, p)| !**t && **p).count() as f64;
    let fn_ = truth.iter().zip(predicted).filter(|(t, p)| **t && !**p).count() as f64;
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// Segmental SNR after removing the best per-frame gain, so uniform
/// attenuation inside a frame is not counted as error.
pub fn scale_invariant_segmental_snr(clean: &[f64], estimate: &[f64], frame: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    let max_energy = clean.chunks(frame).map(energy).fold(0.0f64, f64::max);
    for (c, e) in clean.chunks(frame).zip(estimate.chunks(frame)) {
        let sig = energy(c);
        if sig <= max_energy * 1e-3 {
            continue;
        }
        let gain = c.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / sig;
        let target: f64 = gain * gain * sig;
        let err: f64 = c.iter().zip(e).map(|(a, b)| (gain * a - b).powi(2)).sum();
        let snr = if err == 0.0 { 35.0 } else { db(target / err) };
        total += snr.clamp(-10.0, 35.0);
        count += 1;
    }
    total / count.max(1) as f64
}

/// Two harmonic syllables with a pitch contour, 0.6 s.
pub fn wake_phrase(seed: u64) -> Vec<f64> {
    let len = 9_600;
    let mut r = rng(seed);
    let jitter: f64 = r.random_range(0.98..1.02);
    (0..len)
        .map(|i| {
            let t = i as f64 / FS;
            let f0 = jitter * if t < 0.3 { 180.0 + 200.0 * t } else { 260.0 - 100.0 * (t - 0.3) };
            let env = (PI * (t % 0.3) / 0.3).sin();
            0.2 * env
                * (1..6)
                    .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
        })
        .collect()
}

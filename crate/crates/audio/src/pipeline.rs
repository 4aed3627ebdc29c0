//! The full front-end chain: AEC -> spectral analysis -> denoise ->
//! dereverb -> overlap-add resynthesis -> VAD segmentation.

use serde::{Deserialize, Serialize};

use crate::aec::{EchoCancellerConfig, EchoCancellerState};
use crate::denoise::{spectral_subtract, DenoiseConfig, NoiseProfile};
use crate::dereverb::{DereverbConfig, Dereverberator};
use crate::error::{AudioError, Result};
use crate::frame::{clamp_sample, frame_signal};
use crate::spectrum::Stft;
use crate::vad::{Vad, VadConfig};
use crate::wake::WakeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub vad: VadConfig,
    pub aec: EchoCancellerConfig,
    pub denoise: DenoiseConfig,
    pub dereverb: DereverbConfig,
    pub wake: WakeConfig,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            frame_len: 512,
            hop: 256,
            vad: VadConfig::default(),
            aec: EchoCancellerConfig::default(),
            denoise: DenoiseConfig::default(),
            dereverb: DereverbConfig::default(),
            wake: WakeConfig::default(),
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(AudioError::InvalidConfig("sample_rate_hz must be > 0".into()));
        }
        crate::frame::check_framing(self.frame_len, self.hop)?;
        if self.frame_len < 2 {
            return Err(AudioError::InvalidConfig("frame_len must be >= 2".into()));
        }
        self.aec.validate()?;
        self.denoise.validate()?;
        self.dereverb.validate()?;
        if self.wake.n_coeffs == 0 || self.wake.n_coeffs > self.wake.mel_bands {
            return Err(AudioError::InvalidConfig(
                "wake n_coeffs must lie in 1..=mel_bands".into(),
            ));
        }
        Ok(())
    }

    pub fn ms_to_samples(&self, ms: u64) -> usize {
        (ms as u128 * self.sample_rate_hz as u128 / 1000) as usize
    }

    pub fn samples_to_ms(&self, samples: usize) -> u64 {
        (samples as u128 * 1000 / self.sample_rate_hz as u128) as u64
    }
}

/// Which stages of the chain run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSet {
    pub aec: bool,
    pub denoise: bool,
    pub dereverb: bool,
    /// Zero everything outside the detected speech segments.
    pub vad_gate: bool,
}

impl StageSet {
    pub const ALL: StageSet = StageSet {
        aec: true,
        denoise: true,
        dereverb: true,
        vad_gate: true,
    };
    pub const NONE: StageSet = StageSet {
        aec: false,
        denoise: false,
        dereverb: false,
        vad_gate: false,
    };

    pub fn only(stage: Stage) -> Self {
        let mut s = Self::NONE;
        match stage {
            Stage::Aec => s.aec = true,
            Stage::Denoise => s.denoise = true,
            Stage::Dereverb => s.dereverb = true,
            Stage::Vad => s.vad_gate = true,
            _ => {}
        }
        s
    }
}

/// Stage names recorded in processing traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mfcc,
    WakeDetect,
    Aec,
    Analysis,
    Denoise,
    Dereverb,
    Resynthesis,
    Vad,
}

/// Half-open sample range `[start, end)` detected as speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub start_sample: usize,
    pub end_sample: usize,
}

impl SpeechSegment {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample == self.start_sample
    }
}

/// Output of the front-end, handed to ASR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanUtterance {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
    pub segments: Vec<SpeechSegment>,
}

impl CleanUtterance {
    pub fn has_speech(&self) -> bool {
        !self.segments.is_empty()
    }

    pub fn duration_ms(&self) -> u64 {
        (self.samples.len() as u128 * 1000 / self.sample_rate_hz.max(1) as u128) as u64
    }

    pub fn speech_samples(&self) -> usize {
        self.segments.iter().map(SpeechSegment::len).sum()
    }
}

/// Stateless driver for one utterance; every call starts fresh filters.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    stages: StageSet,
    stft: Stft,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        Self::with_stages(config, StageSet::ALL)
    }

    pub fn with_stages(config: FrontendConfig, stages: StageSet) -> Result<Self> {
        config.validate()?;
        let stft = Stft::new(config.frame_len)?;
        Ok(Self {
            config,
            stages,
            stft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn stages(&self) -> StageSet {
        self.stages
    }

    pub fn process(&self, raw: &[f64], reference: Option<&[f64]>) -> Result<CleanUtterance> {
        self.process_traced(raw, reference, &mut Vec::new())
    }

    /// Same as [`Frontend::process`], appending each stage it runs to `trace`.
    pub fn process_traced(
        &self,
        raw: &[f64],
        reference: Option<&[f64]>,
        trace: &mut Vec<Stage>,
    ) -> Result<CleanUtterance> {
        let cfg = &self.config;
        if raw.len() < cfg.frame_len {
            return Err(AudioError::EmptySignal);
        }
        let mut signal: Vec<f64> = raw.iter().copied().map(clamp_sample).collect();

        if self.stages.aec {
            trace.push(Stage::Aec);
            let mut reference_buf: Vec<f64> = reference
                .map(|r| r.iter().copied().map(clamp_sample).collect())
                .unwrap_or_default();
            reference_buf.resize(signal.len(), 0.0);
            let mut aec = EchoCancellerState::new(&cfg.aec)?;
            signal = aec.cancel(&signal, &reference_buf)?;
        }

        if self.stages.denoise || self.stages.dereverb {
            signal = self.enhance(&signal, trace)?;
        }

        trace.push(Stage::Vad);
        let segments = self.segment(&signal)?;
        if self.stages.vad_gate {
            gate(&mut signal, &segments);
        }
        for s in signal.iter_mut() {
            *s = clamp_sample(*s);
        }
        Ok(CleanUtterance {
            sample_rate_hz: cfg.sample_rate_hz,
            samples: signal,
            segments,
        })
    }

    fn enhance(&self, signal: &[f64], trace: &mut Vec<Stage>) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let (n, hop) = (cfg.frame_len, cfg.hop);
        // pad both ends so every real sample is covered by a full window sum
        let pad = n - hop;
        let mut padded = vec![0.0; pad];
        padded.extend_from_slice(signal);
        padded.resize(padded.len() + pad, 0.0);
        let frames = (padded.len().saturating_sub(n)).div_ceil(hop) + 1;
        padded.resize((frames - 1) * hop + n, 0.0);

        trace.push(Stage::Analysis);
        if self.stages.denoise {
            trace.push(Stage::Denoise);
        }
        if self.stages.dereverb {
            trace.push(Stage::Dereverb);
        }
        trace.push(Stage::Resynthesis);

        let mut gate_vad = Vad::new(cfg.vad.clone());
        let mut noise = NoiseProfile::new(self.stft.bin_count(), &cfg.denoise)?;
        let mut dereverb = Dereverberator::new(cfg.dereverb.clone())?;
        let mut out = vec![0.0; padded.len()];
        let window_gain = window_overlap_gain(self.stft.window(), hop);

        for f in 0..frames {
            let start = f * hop;
            let chunk = &padded[start..start + n];
            let mut spectrum = self.stft.analyze(chunk)?;
            if self.stages.denoise {
                let decision = gate_vad.compute_samples(chunk);
                if !decision.is_speech {
                    noise.observe(&spectrum)?;
                }
                if noise.frames_observed > 0 {
                    spectrum = spectral_subtract(&spectrum, &noise)?;
                }
            }
            if self.stages.dereverb {
                spectrum = dereverb.process(&spectrum)?;
            }
            let frame = self.stft.synthesize(&spectrum)?;
            for (o, x) in out[start..start + n].iter_mut().zip(frame) {
                *o += x / window_gain;
            }
        }
        Ok(out[pad..pad + signal.len()].to_vec())
    }

    /// VAD over `frame_len`/`hop` frames; consecutive speech frames merge.
    pub fn segment(&self, signal: &[f64]) -> Result<Vec<SpeechSegment>> {
        let cfg = &self.config;
        let frames = frame_signal(signal, cfg.frame_len, cfg.hop, cfg.sample_rate_hz)?;
        let mut vad = Vad::new(cfg.vad.clone());
        let mut segments: Vec<SpeechSegment> = Vec::new();
        for frame in &frames {
            if !vad.compute(frame).is_speech {
                continue;
            }
            let start = frame.index * cfg.hop;
            let end = (start + cfg.frame_len).min(signal.len());
            match segments.last_mut() {
                Some(last) if start <= last.end_sample => last.end_sample = last.end_sample.max(end),
                _ => segments.push(SpeechSegment {
                    start_sample: start,
                    end_sample: end,
                }),
            }
        }
        Ok(segments)
    }
}

/// Mean overlap-add gain of the analysis window (1.0 for Hann at 50%).
fn window_overlap_gain(window: &[f64], hop: usize) -> f64 {
    window.iter().sum::<f64>() / hop as f64
}

fn gate(signal: &mut [f64], segments: &[SpeechSegment]) {
    let mut keep = vec![false; signal.len()];
    for seg in segments {
        keep[seg.start_sample..seg.end_sample]
            .iter_mut()
            .for_each(|k| *k = true);
    }
    for (s, k) in signal.iter_mut().zip(keep) {
        if !k {
            *s = 0.0;
        }
    }
}

/// Runs the full chain with default stages.
pub fn process_utterance(
    raw: &[f64],
    reference: Option<&[f64]>,
    config: &FrontendConfig,
) -> Result<CleanUtterance> {
    Frontend::new(config.clone())?.process(raw, reference)
}

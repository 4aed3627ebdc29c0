//! Continuous microphone mode: sleep until the wake word, then capture
//! until the awake window lapses and run the front-end on what was heard.

use std::collections::VecDeque;

use crate::error::Result;
use crate::mfcc::MfccExtractor;
use crate::pipeline::{CleanUtterance, Frontend, FrontendConfig, Stage};
use crate::vad::Vad;
use crate::wake::{detect_wakeword, WakeMode, WakeState};

pub struct WakeGatedStream {
    frontend: Frontend,
    extractor: MfccExtractor,
    wake: WakeState,
    features: VecDeque<Vec<f64>>,
    sleep_buf: Vec<f64>,
    awake_mic: Vec<f64>,
    awake_ref: Vec<f64>,
    awake_vad: Vad,
    vad_pending: usize,
    consumed: usize,
    trace: Vec<Stage>,
}

impl WakeGatedStream {
    pub fn new(config: FrontendConfig, wake: WakeState) -> Result<Self> {
        let extractor =
            MfccExtractor::new(config.frame_len, config.sample_rate_hz, config.wake.mel_bands)?;
        let awake_vad = Vad::new(config.vad.clone());
        Ok(Self {
            frontend: Frontend::new(config)?,
            extractor,
            wake,
            features: VecDeque::new(),
            sleep_buf: Vec::new(),
            awake_mic: Vec::new(),
            awake_ref: Vec::new(),
            awake_vad,
            vad_pending: 0,
            consumed: 0,
            trace: Vec::new(),
        })
    }

    pub fn mode(&self) -> WakeMode {
        self.wake.mode
    }

    pub fn wake_state(&self) -> &WakeState {
        &self.wake
    }

    /// Every stage that has looked at the stream, in order.
    pub fn trace(&self) -> &[Stage] {
        &self.trace
    }

    fn now_ms(&self) -> u64 {
        self.frontend.config().samples_to_ms(self.consumed)
    }

    /// Feeds aligned microphone and playback samples; returns any utterances
    /// completed by this chunk.
    pub fn push(&mut self, mic: &[f64], reference: &[f64]) -> Result<Vec<CleanUtterance>> {
        let mut done = Vec::new();
        let mut offset = 0;
        while offset < mic.len() {
            offset += match self.wake.mode {
                WakeMode::Sleep => self.consume_sleeping(&mic[offset..])?,
                WakeMode::Awake => {
                    let reference = reference.get(offset..).unwrap_or(&[]);
                    let (used, utterance) = self.consume_awake(&mic[offset..], reference)?;
                    done.extend(utterance);
                    used
                }
            };
        }
        Ok(done)
    }

    /// Flushes a capture in progress.
    pub fn finish(&mut self) -> Result<Option<CleanUtterance>> {
        if self.wake.mode == WakeMode::Awake && self.awake_mic.len() >= self.frontend.config().frame_len {
            return self.close_capture().map(Some);
        }
        Ok(None)
    }

    fn consume_sleeping(&mut self, mic: &[f64]) -> Result<usize> {
        let cfg = self.frontend.config();
        let (n, hop) = (cfg.frame_len, cfg.hop);
        let n_coeffs = cfg.wake.n_coeffs;
        let template_len = self.wake.template.len();
        let mut used = 0;
        for &s in mic {
            self.sleep_buf.push(s);
            used += 1;
            self.consumed += 1;
            if self.sleep_buf.len() < n {
                continue;
            }
            let frame = crate::frame::AudioFrame::new(self.sleep_buf.clone(), cfg.sample_rate_hz, 0);
            self.trace.push(Stage::Mfcc);
            self.features.push_back(self.extractor.compute(&frame, n_coeffs)?);
            while self.features.len() > template_len {
                self.features.pop_front();
            }
            self.sleep_buf.drain(..hop);
            if self.features.len() == template_len {
                self.trace.push(Stage::WakeDetect);
                let window: Vec<Vec<f64>> = self.features.iter().cloned().collect();
                let now = self.now_ms();
                if detect_wakeword(&window, &mut self.wake, now)? {
                    self.features.clear();
                    self.sleep_buf.clear();
                    self.awake_mic.clear();
                    self.awake_ref.clear();
                    self.vad_pending = 0;
                    self.awake_vad = Vad::new(self.frontend.config().vad.clone());
                    return Ok(used);
                }
            }
        }
        Ok(used)
    }

    fn consume_awake(&mut self, mic: &[f64], reference: &[f64]) -> Result<(usize, Option<CleanUtterance>)> {
        let cfg = self.frontend.config().clone();
        let mut used = 0;
        for (i, &s) in mic.iter().enumerate() {
            self.awake_mic.push(s);
            self.awake_ref.push(reference.get(i).copied().unwrap_or(0.0));
            used += 1;
            self.consumed += 1;
            self.vad_pending += 1;
            if self.vad_pending == cfg.frame_len {
                self.vad_pending = 0;
                let start = self.awake_mic.len() - cfg.frame_len;
                self.trace.push(Stage::Vad);
                if self.awake_vad.compute_samples(&self.awake_mic[start..]).is_speech {
                    let now = self.now_ms();
                    self.wake.extend(now);
                }
            }
            let now = self.now_ms();
            self.wake.tick(now);
            if self.wake.mode == WakeMode::Sleep {
                let utterance = if self.awake_mic.len() >= cfg.frame_len {
                    Some(self.close_capture()?)
                } else {
                    None
                };
                self.awake_mic.clear();
                self.awake_ref.clear();
                return Ok((used, utterance));
            }
        }
        Ok((used, None))
    }

    fn close_capture(&mut self) -> Result<CleanUtterance> {
        let mic = std::mem::take(&mut self.awake_mic);
        let reference = std::mem::take(&mut self.awake_ref);
        self.wake.mode = WakeMode::Sleep;
        self.wake.awake_deadline_ms = None;
        self.frontend.process_traced(&mic, Some(&reference), &mut self.trace)
    }
}

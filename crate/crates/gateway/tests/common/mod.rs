#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::Engine;
use ia_audio::Frontend;
use ia_core::asr::fingerprint_utterance;
use ia_core::clock::{Clock, ManualClock};
use ia_core::controller::wire::{ChatResponse, WireToolCall};
use ia_core::controller::{ChatTransport, EdgeModelAdapter, ScriptedTransport};
use ia_gateway::{Gateway, GatewayConfig, GatewayParts};
use serde_json::json;

pub fn templates_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../templates")
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn config(data_dir: &Path) -> GatewayConfig {
    GatewayConfig {
        data_dir: data_dir.to_path_buf(),
        templates_dir: Some(templates_dir()),
        ..Default::default()
    }
}

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub clock: Arc<ManualClock>,
    pub transport: Option<Arc<ScriptedTransport>>,
    pub gateway: Gateway,
}

pub struct HarnessBuilder {
    pub online: bool,
    pub clock: Option<Arc<dyn Clock>>,
    pub edge: Option<Arc<dyn EdgeModelAdapter>>,
    pub tweak: Box<dyn FnOnce(&mut GatewayConfig)>,
}

impl Default for HarnessBuilder {
    fn default() -> Self {
        Self {
            online: true,
            clock: None,
            edge: None,
            tweak: Box::new(|_| {}),
        }
    }
}

impl HarnessBuilder {
    pub fn build(self) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_700_000_000_000));
        let transport = self.online.then(|| Arc::new(ScriptedTransport::new(vec![])));
        let mut cfg = config(dir.path());
        (self.tweak)(&mut cfg);
        let gateway = Gateway::with_parts(
            cfg,
            GatewayParts {
                clock: Some(self.clock.unwrap_or_else(|| clock.clone())),
                transport: transport.clone().map(|t| t as Arc<dyn ChatTransport>),
                edge: self.edge,
                mock_asr: None,
            },
        )
        .unwrap();
        Harness {
            dir,
            clock,
            transport,
            gateway,
        }
    }
}

pub fn harness() -> Harness {
    HarnessBuilder::default().build()
}

pub fn text_reply(text: &str) -> ChatResponse {
    ChatResponse::text("chatcmpl-t", "gpt-4o-mini", text)
}

pub fn lamp_call(value: &str) -> ChatResponse {
    ChatResponse::tool_calls(
        "chatcmpl-c",
        "gpt-4o-mini",
        vec![WireToolCall::function(
            "call_1",
            "control_device",
            &json!({"device_id": "lamp", "capability": "power", "value": value}),
        )],
    )
}

/// Two voiced syllables with a pause, about 1.2 s at 16 kHz.
pub fn spoken_command() -> Vec<f64> {
    let fs = 16_000.0;
    let mut out = vec![0.0; 3_200];
    for (f0, len) in [(130.0, 5_600usize), (150.0, 6_400)] {
        for i in 0..len {
            let t = i as f64 / fs;
            let env = (PI * i as f64 / len as f64).sin().powi(2);
            let v: f64 = (1..=8).map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64).sum();
            out.push(0.25 * env * v);
        }
        out.extend(std::iter::repeat_n(0.0, 1_600));
    }
    out.extend(std::iter::repeat_n(0.0, 1_600));
    out
}

pub fn wav_base64(samples: &[f64]) -> String {
    let bytes = ia_audio::wav::wav_bytes(samples, 16_000).unwrap();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// Fingerprint the gateway will see for this audio once it is WAV-encoded.
pub fn gateway_fingerprint(samples: &[f64], cfg: &GatewayConfig) -> u64 {
    let bytes = ia_audio::wav::wav_bytes(samples, 16_000).unwrap();
    let wav = ia_audio::wav::read_wav_bytes(&bytes).unwrap();
    let utterance = Frontend::new(cfg.audio.clone()).unwrap().process(&wav.samples, None).unwrap();
    fingerprint_utterance(&utterance)
}

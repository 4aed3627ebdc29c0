//! Speech recognition bridge: a deterministic mock engine keyed by audio
//! fingerprint, plus subprocess and HTTP hooks for real engines.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use ia_audio::wav::wav_bytes;
use ia_audio::CleanUtterance;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Fnv1a;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsrError {
    #[error("speech recognition timed out after {0} ms")]
    AsrTimeout(u64),
    #[error("speech recognition engine unavailable: {0}")]
    AsrUnavailable(String),
    #[error("recognition confidence {confidence:.3} below minimum {min:.3}")]
    LowConfidence { confidence: f64, min: f64 },
    #[error("malformed engine output: {0}")]
    MalformedOutput(String),
    #[error("invalid engine configuration: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, AsrError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    pub token: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub confidence: f64,
    pub words: Vec<WordSpan>,
    pub engine_id: String,
}

impl Transcript {
    pub fn empty(engine_id: &str) -> Self {
        Self {
            text: String::new(),
            confidence: 0.0,
            words: Vec::new(),
            engine_id: engine_id.to_string(),
        }
    }

    /// Checks span ordering, confidence range and that the text is the
    /// space-joined tokens.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        let mut last_end = 0;
        for w in &self.words {
            if w.end_ms < w.start_ms || w.start_ms < last_end {
                return Err(format!("word span for {:?} overlaps or is reversed", w.token));
            }
            last_end = w.end_ms;
        }
        if !self.words.is_empty() {
            let joined: Vec<&str> = self.words.iter().map(|w| w.token.as_str()).collect();
            if joined.join(" ") != self.text {
                return Err("text does not match word tokens".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrKind {
    Mock,
    Subprocess,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrEngineSpec {
    pub kind: AsrKind,
    pub endpoint_or_path: String,
    pub timeout_ms: u64,
    pub min_confidence: f64,
}

impl Default for AsrEngineSpec {
    fn default() -> Self {
        Self {
            kind: AsrKind::Mock,
            endpoint_or_path: String::new(),
            timeout_ms: 5_000,
            min_confidence: 0.5,
        }
    }
}

impl AsrEngineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(AsrError::InvalidSpec("timeout_ms must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(AsrError::InvalidSpec("min_confidence must lie in [0, 1]".into()));
        }
        if self.kind != AsrKind::Mock && self.endpoint_or_path.is_empty() {
            return Err(AsrError::InvalidSpec(
                "endpoint_or_path is required for subprocess and http engines".into(),
            ));
        }
        Ok(())
    }

    fn engine_id(&self) -> String {
        match self.kind {
            AsrKind::Mock => "mock".into(),
            AsrKind::Subprocess => format!("subprocess:{}", self.endpoint_or_path),
            AsrKind::Http => format!("http:{}", self.endpoint_or_path),
        }
    }
}

/// FNV-1a over the little-endian bytes of every sample.
pub fn fingerprint(samples: &[f64]) -> u64 {
    let mut h = Fnv1a::new();
    for s in samples {
        h.write(&s.to_le_bytes());
    }
    h.finish()
}

pub fn fingerprint_utterance(utterance: &CleanUtterance) -> u64 {
    fingerprint(&utterance.samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub text: String,
    pub confidence: f64,
}

/// Fingerprint to transcript table shared by every mock transcription.
#[derive(Debug, Default)]
pub struct MockRegistry {
    entries: RwLock<HashMap<u64, MockEntry>>,
}

/// On-disk form of the mock registry, fingerprints in hex.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct MockRegistryFile {
    pub entries: Vec<MockRegistryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRegistryRecord {
    pub fingerprint: String,
    pub text: String,
    pub confidence: f64,
}

impl MockRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or overwrites) the transcript for a fingerprint.
    pub fn register(&self, fingerprint: u64, text: &str, confidence: f64) {
        let confidence = if confidence.is_nan() { 0.0 } else { confidence.clamp(0.0, 1.0) };
        self.entries.write().insert(
            fingerprint,
            MockEntry {
                text: text.to_string(),
                confidence,
            },
        );
    }

    pub fn get(&self, fingerprint: u64) -> Option<MockEntry> {
        self.entries.read().get(&fingerprint).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load_records(&self, file: &MockRegistryFile) -> std::result::Result<(), String> {
        for r in &file.entries {
            let fp = u64::from_str_radix(r.fingerprint.trim_start_matches("0x"), 16)
                .map_err(|e| format!("bad fingerprint {:?}: {e}", r.fingerprint))?;
            self.register(fp, &r.text, r.confidence);
        }
        Ok(())
    }
}

pub fn register_mock_utterance(registry: &MockRegistry, fingerprint: u64, text: &str, confidence: f64) {
    registry.register(fingerprint, text, confidence);
}

#[derive(Debug, Deserialize)]
struct EngineReply {
    text: String,
    confidence: f64,
    #[serde(default)]
    words: Vec<WordSpan>,
}

/// Routes utterances to the configured engine and applies the confidence gate.
#[derive(Debug, Clone)]
pub struct AsrBridge {
    spec: AsrEngineSpec,
    mock: Arc<MockRegistry>,
}

impl AsrBridge {
    pub fn new(spec: AsrEngineSpec, mock: Arc<MockRegistry>) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, mock })
    }

    pub fn spec(&self) -> &AsrEngineSpec {
        &self.spec
    }

    pub fn mock_registry(&self) -> &Arc<MockRegistry> {
        &self.mock
    }

    pub fn transcribe(&self, utterance: &CleanUtterance) -> Result<Transcript> {
        transcribe_with(utterance, &self.spec, &self.mock)
    }
}

pub fn transcribe_with(
    utterance: &CleanUtterance,
    spec: &AsrEngineSpec,
    mock: &MockRegistry,
) -> Result<Transcript> {
    let engine_id = spec.engine_id();
    if utterance.segments.is_empty() {
        return Ok(Transcript::empty(&engine_id));
    }
    let transcript = match spec.kind {
        AsrKind::Mock => {
            let fp = fingerprint_utterance(utterance);
            let entry = mock.get(fp).ok_or(AsrError::LowConfidence {
                confidence: 0.0,
                min: spec.min_confidence,
            })?;
            Transcript {
                words: spread_words(&entry.text, utterance),
                text: entry.text,
                confidence: entry.confidence,
                engine_id,
            }
        }
        AsrKind::Subprocess => {
            let reply = run_subprocess(&spec.endpoint_or_path, utterance, spec.timeout_ms)?;
            into_transcript(reply, engine_id)?
        }
        AsrKind::Http => {
            let reply = post_http(&spec.endpoint_or_path, utterance, spec.timeout_ms)?;
            into_transcript(reply, engine_id)?
        }
    };
    if transcript.confidence < spec.min_confidence {
        return Err(AsrError::LowConfidence {
            confidence: transcript.confidence,
            min: spec.min_confidence,
        });
    }
    Ok(transcript)
}

fn into_transcript(reply: EngineReply, engine_id: String) -> Result<Transcript> {
    let t = Transcript {
        text: reply.text,
        confidence: reply.confidence,
        words: reply.words,
        engine_id,
    };
    t.validate().map_err(AsrError::MalformedOutput)?;
    Ok(t)
}

/// Lays the tokens evenly over the detected speech, in order.
fn spread_words(text: &str, utterance: &CleanUtterance) -> Vec<WordSpan> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() || text.split(' ').count() != tokens.len() {
        return Vec::new();
    }
    let sr = utterance.sample_rate_hz.max(1) as u64;
    let start = utterance.segments.first().map_or(0, |s| s.start_sample) as u64 * 1000 / sr;
    let end = utterance.segments.last().map_or(0, |s| s.end_sample) as u64 * 1000 / sr;
    let n = tokens.len() as u64;
    let span = end.saturating_sub(start);
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| WordSpan {
            token: (*t).to_string(),
            start_ms: start + span * i as u64 / n,
            end_ms: start + span * (i as u64 + 1) / n,
        })
        .collect()
}

fn utterance_wav(utterance: &CleanUtterance) -> Result<Vec<u8>> {
    wav_bytes(&utterance.samples, utterance.sample_rate_hz).map_err(|e| AsrError::MalformedOutput(e.to_string()))
}

fn run_subprocess(path: &str, utterance: &CleanUtterance, timeout_ms: u64) -> Result<EngineReply> {
    let wav = utterance_wav(utterance)?;
    let mut child = Command::new(path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| AsrError::AsrUnavailable(format!("{path}: {e}")))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = stdin.write_all(&wav);
        drop(stdin);
        let mut out = String::new();
        let res = stdout.read_to_string(&mut out).map(|_| out);
        let _ = tx.send(res);
    });
    match rx.recv_timeout(Duration::from_millis(timeout_ms)) {
        Ok(Ok(out)) => {
            let _ = child.wait();
            let line = out.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            serde_json::from_str(line).map_err(|e| AsrError::MalformedOutput(e.to_string()))
        }
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(AsrError::AsrUnavailable(e.to_string()))
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(AsrError::AsrTimeout(timeout_ms))
        }
    }
}

fn post_http(url: &str, utterance: &CleanUtterance, timeout_ms: u64) -> Result<EngineReply> {
    let wav = utterance_wav(utterance)?;
    let url = url.to_string();
    let (tx, rx) = mpsc::channel();
    // the blocking client must not live on an async runtime thread
    std::thread::spawn(move || {
        let result = (|| {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(timeout_ms))
                .build()
                .map_err(|e| AsrError::AsrUnavailable(e.to_string()))?;
            let part = reqwest::blocking::multipart::Part::bytes(wav)
                .file_name("utterance.wav")
                .mime_str("audio/wav")
                .map_err(|e| AsrError::AsrUnavailable(e.to_string()))?;
            let form = reqwest::blocking::multipart::Form::new().part("file", part);
            let resp = client.post(&url).multipart(form).send().map_err(|e| {
                if e.is_timeout() {
                    AsrError::AsrTimeout(timeout_ms)
                } else {
                    AsrError::AsrUnavailable(e.to_string())
                }
            })?;
            if !resp.status().is_success() {
                return Err(AsrError::AsrUnavailable(format!("HTTP {}", resp.status())));
            }
            resp.json::<EngineReply>()
                .map_err(|e| AsrError::MalformedOutput(e.to_string()))
        })();
        let _ = tx.send(result);
    });
    rx.recv_timeout(Duration::from_millis(timeout_ms))
        .unwrap_or(Err(AsrError::AsrTimeout(timeout_ms)))
}

//! Request and response bodies of the HTTP API.

use ia_core::controller::Tier;
use ia_core::{ActionResult, CacheStats, Transcript};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw input as it arrives; checked by [`InteractRequest::input`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInput {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_tier: Option<Tier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractRequest {
    pub session_id: String,
    pub user_id: String,
    pub input: RawInput,
    #[serde(default)]
    pub options: InteractOptions,
}

/// A validated input.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Text(String),
    /// Base64-encoded WAV bytes, not yet decoded.
    AudioWav(String),
}

impl InteractRequest {
    pub fn text(session_id: &str, user_id: &str, text: &str) -> Self {
        Self {
            session_id: session_id.into(),
            user_id: user_id.into(),
            input: RawInput {
                kind: "text".into(),
                payload: Some(text.into()),
            },
            options: InteractOptions::default(),
        }
    }

    pub fn audio(session_id: &str, user_id: &str, wav_base64: String) -> Self {
        Self {
            session_id: session_id.into(),
            user_id: user_id.into(),
            input: RawInput {
                kind: "audio_wav".into(),
                payload: Some(wav_base64),
            },
            options: InteractOptions::default(),
        }
    }

    pub fn input(&self) -> Result<Input, GatewayError> {
        if self.session_id.trim().is_empty() || self.user_id.trim().is_empty() {
            return Err(GatewayError::BadRequest("session_id and user_id must be non-empty".into()));
        }
        let payload = || {
            self.input
                .payload
                .clone()
                .ok_or_else(|| GatewayError::BadRequest("input.payload is required".into()))
        };
        match self.input.kind.as_str() {
            "text" => {
                let text = payload()?;
                if text.trim().is_empty() {
                    return Err(GatewayError::BadRequest("text input is empty".into()));
                }
                Ok(Input::Text(text))
            }
            "audio_wav" => Ok(Input::AudioWav(payload()?)),
            other => Err(GatewayError::UnsupportedModality(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub audio: f64,
    pub asr: f64,
    pub cache: f64,
    pub llm: f64,
    pub execute: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractResponse {
    pub interaction_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
    pub source_tier: Tier,
    pub reply_text: String,
    pub actions: Vec<ActionResult>,
    pub timing_ms: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub interaction_id: u64,
    /// Kept wide so out-of-range ratings reach validation instead of failing to parse.
    pub rating: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TierCounts {
    pub cache: u64,
    pub edge_model: u64,
    pub cloud_llm: u64,
    pub clarify: u64,
    /// Requests that ended in an error status.
    pub failed: u64,
}

impl TierCounts {
    pub fn bump(&mut self, tier: Tier) {
        match tier {
            Tier::Cache => self.cache += 1,
            Tier::EdgeModel => self.edge_model += 1,
            Tier::CloudLLM => self.cloud_llm += 1,
            Tier::Clarify => self.clarify += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub cache: CacheStats,
    pub uptime_s: u64,
    pub requests: TierCounts,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unsupported input modality {0:?}")]
    UnsupportedModality(String),
    #[error("unknown interaction {0}")]
    NotFound(u64),
    /// No tier could produce an answer; the reply is still meant for the user.
    #[error("no answering tier available: {detail}")]
    Unavailable {
        interaction_id: u64,
        reply_text: String,
        detail: String,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::BadRequest(_) => 400,
            GatewayError::UnsupportedModality(_) => 422,
            GatewayError::NotFound(_) => 404,
            GatewayError::Unavailable { .. } => 503,
            GatewayError::Internal(_) => 500,
        }
    }

    /// JSON error body; 503 bodies carry the apologetic reply.
    pub fn body(&self) -> serde_json::Value {
        match self {
            GatewayError::Unavailable {
                interaction_id,
                reply_text,
                ..
            } => serde_json::json!({
                "error": self.to_string(),
                "interaction_id": interaction_id,
                "reply_text": reply_text,
            }),
            _ => serde_json::json!({ "error": self.to_string() }),
        }
    }
}

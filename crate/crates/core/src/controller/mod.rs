//! Request routing, prompt assembly, the cloud tool-calling loop, the edge
//! model adapter and plan templates.

pub mod cloud;
pub mod edge;
pub mod plan;
pub mod prompt;
pub mod tools;
pub mod transport;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::normalize_query;

pub use cloud::{call_cloud, CloudClient, CloudReply, ExecutedToolCall};
pub use edge::{edge_generate, flatten_prompt, EdgeModelAdapter, FailingEdgeModel, MockEdgeModel};
pub use plan::{select_plan_template, PlanStep, PlanTemplate};
pub use prompt::{build_prompt, estimate_tokens, PromptBundle, PromptConfig, Role, Turn};
pub use tools::{dispatch_tool, ToolCall, ToolHandler, ToolRegistry, ToolResult, ToolSchema};
pub use transport::{ChatTransport, HttpTransport, ScriptedTransport, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("cloud endpoint unreachable: {0}")]
    CloudUnreachable(String),
    #[error("cloud request timed out")]
    CloudTimeout,
    #[error("malformed cloud response: {0}")]
    MalformedCloudResponse(String),
    #[error("tool loop exceeded {0} round trips")]
    ToolLoopExceeded(usize),
    #[error("edge model failed: {0}")]
    AdapterFailure(String),
    #[error("invalid plan template: {0}")]
    InvalidTemplate(String),
    #[error("plan step failed: {0}")]
    PlanFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Cache,
    EdgeModel,
    #[serde(rename = "cloud_llm")]
    CloudLLM,
    Clarify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteReason {
    CacheHit,
    Offline,
    LowComplexity,
    ToolIntent,
    Default,
    LowAsrConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub tier: Tier,
    pub reason: RouteReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    /// Queries of at most this many words may stay on the edge.
    pub complexity_threshold: usize,
    pub similarity_tau: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            complexity_threshold: 24,
            similarity_tau: 0.85,
        }
    }
}

/// Everything routing looks at.
#[derive(Debug, Clone, Copy)]
pub struct RouteInput<'a> {
    pub text: &'a str,
    /// The recognizer rejected the utterance as too uncertain.
    pub low_confidence: bool,
    pub cache_similarity: Option<f64>,
    pub connectivity: Connectivity,
    pub tool_triggers: &'a [String],
}

pub fn word_count(text: &str) -> usize {
    normalize_query(text).split_whitespace().count()
}

/// Whether any trigger keyword (possibly several words) occurs as whole
/// words in the normalized text.
pub fn has_keyword(text: &str, keyword: &str) -> bool {
    let words: Vec<String> = normalize_query(text).split_whitespace().map(String::from).collect();
    let key: Vec<String> = normalize_query(keyword).split_whitespace().map(String::from).collect();
    !key.is_empty() && words.windows(key.len()).any(|w| w == key.as_slice())
}

pub fn route(input: &RouteInput<'_>, config: &RoutingConfig) -> RoutingDecision {
    let decide = |tier, reason| RoutingDecision { tier, reason };
    if input.low_confidence {
        return decide(Tier::Clarify, RouteReason::LowAsrConfidence);
    }
    if input.cache_similarity.is_some_and(|s| s >= config.similarity_tau) {
        return decide(Tier::Cache, RouteReason::CacheHit);
    }
    if input.connectivity == Connectivity::Offline {
        return decide(Tier::EdgeModel, RouteReason::Offline);
    }
    let tool_intent = input.tool_triggers.iter().any(|k| has_keyword(input.text, k));
    if tool_intent {
        return decide(Tier::CloudLLM, RouteReason::ToolIntent);
    }
    if word_count(input.text) <= config.complexity_threshold {
        return decide(Tier::EdgeModel, RouteReason::LowComplexity);
    }
    decide(Tier::CloudLLM, RouteReason::Default)
}

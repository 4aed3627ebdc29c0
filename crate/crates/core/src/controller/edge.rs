//! Local (edge) model interface and its deterministic mock.

use super::prompt::{PromptBundle, Role};
use super::ControllerError;
use crate::hash::Fnv1a;

pub trait EdgeModelAdapter: Send + Sync {
    fn id(&self) -> &str;
    fn max_tokens(&self) -> usize;
    fn deterministic(&self) -> bool;
    fn generate(&self, prompt: &str) -> Result<String, String>;
}

/// Single-string rendering of a bundle for models without chat roles.
pub fn flatten_prompt(bundle: &PromptBundle) -> String {
    let mut out = format!("### System\n{}\n", bundle.system_message());
    if !bundle.tools.is_empty() {
        let names: Vec<&str> = bundle.tools.iter().map(|t| t.name.as_str()).collect();
        out.push_str(&format!("### Tools\n{}\n", names.join(", ")));
    }
    for turn in &bundle.history {
        let who = match turn.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("### {who}\n{}\n", turn.content));
    }
    out.push_str(&format!("### user\n{}\n### assistant\n", bundle.user_text));
    out
}

/// Truncates to roughly `max_tokens` (four characters per token).
fn clip(text: String, max_tokens: usize) -> String {
    let limit = max_tokens * 4;
    if text.chars().count() <= limit {
        text
    } else {
        text.chars().take(limit).collect()
    }
}

pub fn edge_generate(bundle: &PromptBundle, adapter: &dyn EdgeModelAdapter) -> Result<String, ControllerError> {
    let prompt = flatten_prompt(bundle);
    let text = adapter.generate(&prompt).map_err(ControllerError::AdapterFailure)?;
    Ok(clip(text, adapter.max_tokens()))
}

const CANNED: [&str; 6] = [
    "Sure, I can help with that here at home.",
    "Here is what I know locally.",
    "Done thinking it over; this is my short answer.",
    "I looked at this on the gateway without going online.",
    "Good question. A quick local answer follows.",
    "Let me keep this brief.",
];

/// Picks a canned answer by hashing the seed with the prompt.
#[derive(Debug, Clone)]
pub struct MockEdgeModel {
    pub seed: u64,
    pub max_tokens: usize,
}

impl MockEdgeModel {
    pub fn new(seed: u64, max_tokens: usize) -> Self {
        Self { seed, max_tokens }
    }

    fn key(&self, prompt: &str) -> u64 {
        let mut h = Fnv1a::new();
        h.write(&self.seed.to_le_bytes());
        h.write(prompt.as_bytes());
        h.finish()
    }
}

impl EdgeModelAdapter for MockEdgeModel {
    fn id(&self) -> &str {
        "mock-edge"
    }

    fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn generate(&self, prompt: &str) -> Result<String, String> {
        let k = self.key(prompt);
        let canned = CANNED[(k % CANNED.len() as u64) as usize];
        Ok(format!("{canned} (ref {:08x})", (k >> 32) as u32))
    }
}

/// Always fails; stands in for a crashed or missing local model.
#[derive(Debug, Clone, Default)]
pub struct FailingEdgeModel;

impl EdgeModelAdapter for FailingEdgeModel {
    fn id(&self) -> &str {
        "failing-edge"
    }

    fn max_tokens(&self) -> usize {
        0
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn generate(&self, _prompt: &str) -> Result<String, String> {
        Err("edge model unavailable".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(user: &str) -> PromptBundle {
        PromptBundle {
            system_text: "sys".into(),
            context_block: String::new(),
            template_instructions: None,
            history: vec![],
            user_text: user.into(),
            tools: vec![],
        }
    }

    #[test]
    fn same_prompt_same_reply() {
        let m = MockEdgeModel::new(7, 64);
        assert_eq!(edge_generate(&bundle("hi"), &m).unwrap(), edge_generate(&bundle("hi"), &m).unwrap());
    }

    #[test]
    fn different_prompts_differ() {
        let m = MockEdgeModel::new(7, 64);
        assert_ne!(edge_generate(&bundle("hi"), &m).unwrap(), edge_generate(&bundle("yo"), &m).unwrap());
    }

    #[test]
    fn output_respects_token_limit() {
        let m = MockEdgeModel::new(1, 3);
        assert!(edge_generate(&bundle("hi"), &m).unwrap().chars().count() <= 12);
    }

    #[test]
    fn failure_surfaces_as_adapter_failure() {
        let err = edge_generate(&bundle("hi"), &FailingEdgeModel).unwrap_err();
        assert!(matches!(err, ControllerError::AdapterFailure(_)));
    }
}

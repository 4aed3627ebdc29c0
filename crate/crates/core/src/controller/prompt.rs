//! Prompt assembly under a token budget.

use serde::{Deserialize, Serialize};

use super::plan::PlanTemplate;
use super::tools::ToolSchema;
use crate::context::{format_context_for_prompt, ContextSnapshot, UserProfile};

pub const DEFAULT_SYSTEM_TEXT: &str = "You are a home assistant running on a local gateway. \
You can answer questions and operate the devices exposed as tools. \
Only act on devices when the user asks for it, and say so when you cannot help.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub system_text: String,
    pub token_budget: usize,
    /// Most recent turns considered before the budget is applied.
    pub max_history_turns: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
            token_budget: 2_048,
            max_history_turns: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub context_block: String,
    pub template_instructions: Option<String>,
    pub history: Vec<Turn>,
    pub user_text: String,
    pub tools: Vec<ToolSchema>,
}

/// `ceil(chars / 4)`
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl PromptBundle {
    fn fixed_tokens(&self) -> usize {
        let tools: usize = self
            .tools
            .iter()
            .map(|t| estimate_tokens(&serde_json::to_string(&t.wire()).unwrap_or_default()))
            .sum();
        estimate_tokens(&self.system_text)
            + estimate_tokens(&self.context_block)
            + self.template_instructions.as_deref().map_or(0, estimate_tokens)
            + estimate_tokens(&self.user_text)
            + tools
    }

    pub fn token_estimate(&self) -> usize {
        self.fixed_tokens() + self.history.iter().map(|t| estimate_tokens(&t.content)).sum::<usize>()
    }

    /// The system message sent to a chat model.
    pub fn system_message(&self) -> String {
        let mut out = self.system_text.clone();
        if let Some(t) = &self.template_instructions {
            out.push_str("\n\n");
            out.push_str(t);
        }
        if !self.context_block.is_empty() {
            out.push_str("\n\nCurrent context:\n");
            out.push_str(&self.context_block);
        }
        out
    }
}

/// Assembles the prompt. History is dropped oldest first until the
/// estimate fits; if the fixed parts alone overflow, context lines go
/// from the end.
pub fn build_prompt(
    query: &str,
    snapshot: &ContextSnapshot,
    profile: Option<&UserProfile>,
    history: &[Turn],
    template: Option<&PlanTemplate>,
    tools: &[ToolSchema],
    config: &PromptConfig,
) -> PromptBundle {
    let keep_from = history.len().saturating_sub(config.max_history_turns);
    let mut bundle = PromptBundle {
        system_text: config.system_text.clone(),
        context_block: format_context_for_prompt(snapshot, profile),
        template_instructions: template.map(PlanTemplate::instructions),
        history: history[keep_from..].to_vec(),
        user_text: query.to_string(),
        tools: tools.to_vec(),
    };
    let mut history_tokens: usize = bundle.history.iter().map(|t| estimate_tokens(&t.content)).sum();
    let mut drop = 0;
    while drop < bundle.history.len() && bundle.fixed_tokens() + history_tokens > config.token_budget {
        history_tokens -= estimate_tokens(&bundle.history[drop].content);
        drop += 1;
    }
    bundle.history.drain(..drop);
    while bundle.token_estimate() > config.token_budget && !bundle.context_block.is_empty() {
        match bundle.context_block.rfind('\n') {
            Some(i) => bundle.context_block.truncate(i),
            None => bundle.context_block.clear(),
        }
    }
    bundle
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn empty_snapshot() -> ContextSnapshot {
        ContextSnapshot {
            session_id: "s".into(),
            wall_time_ms: 0,
            sensors: BTreeMap::new(),
        }
    }

    fn turn(i: usize) -> Turn {
        Turn {
            role: if i.is_multiple_of(2) { Role::User } else { Role::Assistant },
            content: format!("turn number {i} with some padding text"),
        }
    }

    #[test]
    fn bare_prompt_has_system_and_user_only() {
        let b = build_prompt("hello", &empty_snapshot(), None, &[], None, &[], &PromptConfig::default());
        assert_eq!(b.user_text, "hello");
        assert!(b.context_block.is_empty() && b.history.is_empty() && b.template_instructions.is_none());
        assert_eq!(b.system_text, DEFAULT_SYSTEM_TEXT);
    }

    #[test]
    fn oldest_history_goes_first() {
        let history: Vec<Turn> = (0..8).map(turn).collect();
        let cfg = PromptConfig {
            system_text: "sys".into(),
            token_budget: 40,
            max_history_turns: 8,
        };
        let b = build_prompt("q", &empty_snapshot(), None, &history, None, &[], &cfg);
        assert!(b.token_estimate() <= 40);
        assert!(!b.history.is_empty());
        assert_eq!(b.history.last(), history.last());
        let first_kept = history.len() - b.history.len();
        assert_eq!(b.history[0], history[first_kept]);
    }

    #[test]
    fn estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}

//! The cloud conversation loop with tool dispatch.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::{PromptBundle, Role};
use super::tools::{dispatch_tool, ToolCall, ToolRegistry, ToolResult};
use super::transport::{ChatTransport, TransportError};
use super::wire::{ChatMessage, ChatRequest, ChatResponse, Usage};
use super::ControllerError;

pub const MAX_ROUND_TRIPS: usize = 5;

#[derive(Clone)]
pub struct CloudClient {
    pub transport: Arc<dyn ChatTransport>,
    pub model: String,
    pub max_round_trips: usize,
    /// Extra attempts after a transient failure.
    pub retries: usize,
}

impl CloudClient {
    pub fn new(transport: Arc<dyn ChatTransport>, model: &str) -> Self {
        Self {
            transport,
            model: model.to_string(),
            max_round_trips: MAX_ROUND_TRIPS,
            retries: 1,
        }
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ControllerError> {
        let mut attempt = 0;
        loop {
            match self.transport.send(request) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_transient() && attempt < self.retries => {
                    tracing::warn!(error = %e, "cloud request failed, retrying");
                    attempt += 1;
                }
                Err(e) => return Err(map_transport(e)),
            }
        }
    }
}

fn map_transport(e: TransportError) -> ControllerError {
    match e {
        TransportError::Timeout => ControllerError::CloudTimeout,
        TransportError::Unreachable(m) => ControllerError::CloudUnreachable(m),
        TransportError::Status(code, body) => ControllerError::CloudUnreachable(format!("HTTP {code}: {body}")),
        TransportError::Malformed(m) => ControllerError::MalformedCloudResponse(m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedToolCall {
    pub call_id: String,
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudReply {
    pub text: String,
    pub tool_calls: Vec<ExecutedToolCall>,
    pub usage: Usage,
    pub round_trips: usize,
}

/// The opening request for a prompt bundle.
pub fn initial_request(bundle: &PromptBundle, model: &str) -> ChatRequest {
    let mut messages = vec![ChatMessage::system(&bundle.system_message())];
    for turn in &bundle.history {
        messages.push(match turn.role {
            Role::User => ChatMessage::user(&turn.content),
            Role::Assistant => ChatMessage::assistant(&turn.content),
        });
    }
    messages.push(ChatMessage::user(&bundle.user_text));
    let tools: Vec<_> = bundle.tools.iter().map(|t| t.wire()).collect();
    ChatRequest {
        model: model.to_string(),
        tool_choice: (!tools.is_empty()).then(|| "auto".to_string()),
        messages,
        tools,
    }
}

pub fn call_cloud(
    bundle: &PromptBundle,
    client: &CloudClient,
    registry: &ToolRegistry,
) -> Result<CloudReply, ControllerError> {
    let mut request = initial_request(bundle, &client.model);
    let mut executed = Vec::new();
    let mut usage = Usage::default();
    for round in 1..=client.max_round_trips {
        let response = client.send(&request)?;
        if let Some(u) = &response.usage {
            usage.add(u);
        }
        let message = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ControllerError::MalformedCloudResponse("no choices".into()))?
            .message;
        let calls = message.tool_calls.clone().unwrap_or_default();
        if calls.is_empty() {
            let text = message
                .content
                .ok_or_else(|| ControllerError::MalformedCloudResponse("assistant message without content".into()))?;
            return Ok(CloudReply {
                text,
                tool_calls: executed,
                usage,
                round_trips: round,
            });
        }
        request.messages.push(message);
        for wc in calls {
            let parsed: Result<serde_json::Map<String, Value>, _> = serde_json::from_str(&wc.function.arguments);
            let call = ToolCall {
                name: wc.function.name.clone(),
                arguments: parsed.as_ref().cloned().unwrap_or_default(),
            };
            let result = match parsed {
                Ok(_) => dispatch_tool(&call, registry),
                Err(e) => ToolResult::failed(&call.name, format!("invalid arguments: {e}")),
            };
            request.messages.push(ChatMessage::tool(&wc.id, &result.output));
            executed.push(ExecutedToolCall {
                call_id: wc.id,
                call,
                result,
            });
        }
    }
    Err(ControllerError::ToolLoopExceeded(client.max_round_trips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::tools::{EchoTool, ToolHandler};
    use crate::controller::transport::ScriptedTransport;
    use crate::controller::wire::WireToolCall;
    use serde_json::json;

    fn bundle(tools: &ToolRegistry) -> PromptBundle {
        PromptBundle {
            system_text: "sys".into(),
            context_block: String::new(),
            template_instructions: None,
            history: vec![],
            user_text: "hello".into(),
            tools: tools.schemas(),
        }
    }

    fn echo_registry() -> ToolRegistry {
        let mut r = ToolRegistry::new();
        r.register(EchoTool::schema(), Arc::new(EchoTool) as Arc<dyn ToolHandler>);
        r
    }

    #[test]
    fn plain_reply() {
        let t = Arc::new(ScriptedTransport::new(vec![Ok(ChatResponse::text("r1", "m", "hi there"))]));
        let reply = call_cloud(&bundle(&ToolRegistry::new()), &CloudClient::new(t.clone(), "m"), &ToolRegistry::new())
            .unwrap();
        assert_eq!(reply.text, "hi there");
        assert!(reply.tool_calls.is_empty());
        assert_eq!(t.call_count(), 1);
    }

    #[test]
    fn one_tool_call_then_text() {
        let reg = echo_registry();
        let t = Arc::new(ScriptedTransport::new(vec![
            Ok(ChatResponse::tool_calls(
                "r1",
                "m",
                vec![WireToolCall::function("call_1", "echo", &json!({"msg": "X"}))],
            )),
            Ok(ChatResponse::text("r2", "m", "done")),
        ]));
        let reply = call_cloud(&bundle(&reg), &CloudClient::new(t.clone(), "m"), &reg).unwrap();
        assert_eq!(reply.text, "done");
        assert_eq!(reply.tool_calls.len(), 1);
        assert_eq!(reply.tool_calls[0].result.output, "X");
        let second = &t.requests()[1];
        let last = second.messages.last().unwrap();
        assert_eq!(last.role, "tool");
        assert_eq!(last.tool_call_id.as_deref(), Some("call_1"));
    }

    #[test]
    fn endless_tool_calls_stop_at_the_cap() {
        let reg = echo_registry();
        let t = Arc::new(ScriptedTransport::from_fn(|_, i| {
            Ok(ChatResponse::tool_calls(
                "r",
                "m",
                vec![WireToolCall::function(&format!("c{i}"), "echo", &json!({"msg": "again"}))],
            ))
        }));
        let err = call_cloud(&bundle(&reg), &CloudClient::new(t.clone(), "m"), &reg).unwrap_err();
        assert_eq!(err, ControllerError::ToolLoopExceeded(5));
        assert_eq!(t.call_count(), 5);
    }

    #[test]
    fn one_retry_on_transient_failure() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            Ok(ChatResponse::text("r", "m", "ok")),
        ]));
        let reply = call_cloud(&bundle(&ToolRegistry::new()), &CloudClient::new(t.clone(), "m"), &ToolRegistry::new())
            .unwrap();
        assert_eq!(reply.text, "ok");
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
        ]));
        let err = call_cloud(&bundle(&ToolRegistry::new()), &CloudClient::new(t, "m"), &ToolRegistry::new())
            .unwrap_err();
        assert_eq!(err, ControllerError::CloudTimeout);
    }

    #[test]
    fn missing_choices_are_malformed() {
        let mut r = ChatResponse::text("r", "m", "x");
        r.choices.clear();
        let t = Arc::new(ScriptedTransport::new(vec![Ok(r)]));
        let err = call_cloud(&bundle(&ToolRegistry::new()), &CloudClient::new(t, "m"), &ToolRegistry::new())
            .unwrap_err();
        assert!(matches!(err, ControllerError::MalformedCloudResponse(_)));
    }
}

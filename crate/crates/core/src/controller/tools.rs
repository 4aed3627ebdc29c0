//! Tool registry, argument validation and dispatch. Tool failures are
//! returned as data so the model can see them.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::wire::{WireFunction, WireTool};
use crate::actions::{Action, ActionExecutor, ActionOrigin, ActionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    /// JSON Schema for the argument object.
    pub parameters: Value,
    /// Words in a query that suggest this tool is needed.
    #[serde(default)]
    pub trigger_keywords: Vec<String>,
}

impl ToolSchema {
    pub fn wire(&self) -> WireTool {
        WireTool {
            kind: "function".into(),
            function: WireFunction {
                name: self.name.clone(),
                description: self.description.clone(),
                parameters: self.parameters.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub name: String,
    pub output: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionResult>,
}

impl ToolResult {
    pub fn failed(name: &str, output: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            output: output.into(),
            ok: false,
            action: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub output: String,
    pub action: Option<ActionResult>,
}

pub trait ToolHandler: Send + Sync {
    fn call(&self, arguments: &Map<String, Value>) -> Result<ToolOutput, String>;

    /// Non-reentrant handlers never run concurrently with themselves.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Wraps a closure as a reentrant tool.
pub struct FnTool<F>(pub F);

impl<F> ToolHandler for FnTool<F>
where
    F: Fn(&Map<String, Value>) -> Result<String, String> + Send + Sync,
{
    fn call(&self, arguments: &Map<String, Value>) -> Result<ToolOutput, String> {
        (self.0)(arguments).map(|output| ToolOutput { output, action: None })
    }
}

/// Returns its `msg` argument.
pub struct EchoTool;

impl EchoTool {
    pub fn schema() -> ToolSchema {
        ToolSchema {
            name: "echo".into(),
            description: "Repeat a message back.".into(),
            parameters: json!({
                "type": "object",
                "properties": {"msg": {"type": "string"}},
                "required": ["msg"],
                "additionalProperties": false
            }),
            trigger_keywords: vec!["echo".into()],
        }
    }
}

impl ToolHandler for EchoTool {
    fn call(&self, arguments: &Map<String, Value>) -> Result<ToolOutput, String> {
        let msg = arguments.get("msg").and_then(Value::as_str).unwrap_or_default();
        Ok(ToolOutput {
            output: msg.to_string(),
            action: None,
        })
    }
}

/// Operates registered devices through the action executor.
pub struct DeviceControlTool {
    executor: Arc<ActionExecutor>,
    origin: ActionOrigin,
}

impl DeviceControlTool {
    pub const NAME: &'static str = "control_device";

    pub fn new(executor: Arc<ActionExecutor>, origin: ActionOrigin) -> Self {
        Self { executor, origin }
    }

    pub fn schema(executor: &ActionExecutor) -> ToolSchema {
        let inventory = executor.inventory();
        let ids: Vec<&str> = inventory.iter().map(|d| d.device_id.as_str()).collect();
        let mut caps: Vec<&str> = inventory
            .iter()
            .flat_map(|d| d.capabilities.iter().map(|c| c.name.as_str()))
            .collect();
        caps.sort_unstable();
        caps.dedup();
        let mut triggers: Vec<String> = inventory
            .iter()
            .flat_map(|d| [d.device_id.clone(), d.kind.clone()])
            .collect();
        triggers.extend(["turn on", "turn off", "brightness", "light", "heating"].map(String::from));
        triggers.sort();
        triggers.dedup();
        ToolSchema {
            name: Self::NAME.into(),
            description: "Set one capability of a home device, e.g. lamp power on or thermostat set_target 21."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "device_id": {"type": "string", "enum": ids},
                    "capability": {"type": "string", "enum": caps},
                    "value": {"type": ["string", "number"]}
                },
                "required": ["device_id", "capability", "value"],
                "additionalProperties": false
            }),
            trigger_keywords: triggers,
        }
    }
}

impl ToolHandler for DeviceControlTool {
    fn call(&self, arguments: &Map<String, Value>) -> Result<ToolOutput, String> {
        let s = |k: &str| arguments.get(k).and_then(Value::as_str).unwrap_or_default();
        let value = arguments.get("value").cloned().unwrap_or(Value::Null);
        let action = Action::set(s("device_id"), s("capability"), value, self.origin);
        let result = self.executor.execute(&action);
        Ok(ToolOutput {
            output: result.detail.clone(),
            action: Some(result),
        })
    }

    fn reentrant(&self) -> bool {
        false
    }
}

struct Registered {
    schema: ToolSchema,
    handler: Arc<dyn ToolHandler>,
    serial: Mutex<()>,
}

#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Registered>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a tool.
    pub fn register(&mut self, schema: ToolSchema, handler: Arc<dyn ToolHandler>) {
        self.tools.insert(
            schema.name.clone(),
            Registered {
                schema,
                handler,
                serial: Mutex::new(()),
            },
        );
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.tools.values().map(|r| r.schema.clone()).collect()
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name).map(|r| &r.schema)
    }

    pub fn trigger_keywords(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .tools
            .values()
            .flat_map(|r| r.schema.trigger_keywords.iter().cloned())
            .collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

pub fn dispatch_tool(call: &ToolCall, registry: &ToolRegistry) -> ToolResult {
    let Some(tool) = registry.tools.get(&call.name) else {
        return ToolResult::failed(&call.name, "unknown tool");
    };
    let args = Value::Object(call.arguments.clone());
    if let Err(msg) = validate_against_schema(&tool.schema.parameters, &args, "arguments") {
        return ToolResult::failed(&call.name, format!("invalid arguments: {msg}"));
    }
    let _guard = (!tool.handler.reentrant()).then(|| tool.serial.lock());
    match tool.handler.call(&call.arguments) {
        Ok(out) => ToolResult {
            name: call.name.clone(),
            ok: out.action.as_ref().is_none_or(|a| a.ok),
            output: out.output,
            action: out.action,
        },
        Err(msg) => ToolResult::failed(&call.name, msg),
    }
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        _ => true,
    }
}

/// Validates against the JSON Schema keywords tools use here: `type`,
/// `enum`, `minimum`, `maximum`, `minLength`, `properties`, `required`,
/// `additionalProperties` and `items`.
pub fn validate_against_schema(schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    let Some(schema) = schema.as_object() else {
        return Ok(());
    };
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(t, value),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(t, value)),
            _ => true,
        };
        if !ok {
            return Err(format!("{path} must be of type {ty}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(value) {
            return Err(format!("{path} must be one of {}", Value::Array(options.clone())));
        }
    }
    if let Some(n) = value.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if n < min {
                return Err(format!("{path} must be >= {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if n > max {
                return Err(format!("{path} must be <= {max}"));
            }
        }
    }
    if let (Some(s), Some(min)) = (value.as_str(), schema.get("minLength").and_then(Value::as_u64)) {
        if (s.chars().count() as u64) < min {
            return Err(format!("{path} must have at least {min} characters"));
        }
    }
    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(Value::Array(required)) = schema.get("required") {
            for r in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(r) {
                    return Err(format!("missing required argument {r:?}"));
                }
            }
        }
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate_against_schema(sub, v, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("unexpected argument {k:?}"));
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate_against_schema(items, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> ToolRegistry {
        let mut r = ToolRegistry::new();
        r.register(EchoTool::schema(), Arc::new(EchoTool));
        r
    }

    fn call(name: &str, args: Value) -> ToolCall {
        ToolCall {
            name: name.into(),
            arguments: args.as_object().cloned().unwrap_or_default(),
        }
    }

    #[test]
    fn echo_returns_message() {
        let r = dispatch_tool(&call("echo", json!({"msg": "hi"})), &registry());
        assert!(r.ok);
        assert_eq!(r.output, "hi");
    }

    #[test]
    fn unknown_tool_is_data() {
        let r = dispatch_tool(&call("nope", json!({})), &registry());
        assert!(!r.ok);
        assert_eq!(r.output, "unknown tool");
    }

    #[test]
    fn missing_argument_is_reported() {
        let r = dispatch_tool(&call("echo", json!({})), &registry());
        assert!(!r.ok);
        assert!(r.output.contains("missing required argument \"msg\""), "{}", r.output);
    }

    #[test]
    fn wrong_type_and_extra_fields_are_rejected() {
        assert!(!dispatch_tool(&call("echo", json!({"msg": 3})), &registry()).ok);
        assert!(!dispatch_tool(&call("echo", json!({"msg": "a", "x": 1})), &registry()).ok);
    }

    #[test]
    fn device_tool_drives_the_lamp() {
        let ex = Arc::new(ActionExecutor::with_mock_devices());
        let mut r = ToolRegistry::new();
        r.register(
            DeviceControlTool::schema(&ex),
            Arc::new(DeviceControlTool::new(ex.clone(), ActionOrigin::CloudTool)),
        );
        let ok = dispatch_tool(
            &call("control_device", json!({"device_id": "lamp", "capability": "power", "value": "on"})),
            &r,
        );
        assert!(ok.ok, "{}", ok.output);
        assert_eq!(ex.state_dump()["lamp"]["power"], "on");
        let bad = dispatch_tool(
            &call("control_device", json!({"device_id": "lamp", "capability": "brightness", "value": 150})),
            &r,
        );
        assert!(!bad.ok);
        assert!(bad.output.contains("outside the range"));
        let unknown = dispatch_tool(
            &call("control_device", json!({"device_id": "oven", "capability": "power", "value": "on"})),
            &r,
        );
        assert!(!unknown.ok);
    }
}

//! Plan templates: stored recipes of tool calls plus a reply pattern,
//! selected by trigger keywords.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::tools::{dispatch_tool, ToolCall, ToolRegistry, ToolResult};
use super::{has_keyword, ControllerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool: String,
    #[serde(default)]
    pub args_template: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub name: String,
    pub trigger_keywords: Vec<String>,
    #[serde(default)]
    pub steps: Vec<PlanStep>,
    pub response_template: String,
}

/// Values a template can refer to: `query`, `user_id`, `display_name`,
/// `pref.<key>`, `sensor.<id>`. Step outputs are added as
/// `steps.<n>.output` while the plan runs.
pub type PlanSlots = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub template: String,
    pub reply: String,
    pub results: Vec<ToolResult>,
}

/// `{{name}}` placeholders in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push(after[..end].trim().to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

fn value_placeholders(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.extend(placeholders(s)),
        Value::Array(items) => items.iter().for_each(|i| value_placeholders(i, out)),
        Value::Object(map) => map.values().for_each(|i| value_placeholders(i, out)),
        _ => {}
    }
}

/// Whether a placeholder can resolve at a given point of the plan.
fn resolvable(name: &str, steps_done: usize) -> bool {
    if matches!(name, "query" | "user_id" | "display_name") {
        return true;
    }
    if let Some(k) = name.strip_prefix("pref.").or_else(|| name.strip_prefix("sensor.")) {
        return !k.is_empty();
    }
    if let Some(rest) = name.strip_prefix("steps.") {
        if let Some(idx) = rest.strip_suffix(".output") {
            return idx.parse::<usize>().is_ok_and(|i| i < steps_done);
        }
    }
    false
}

impl PlanTemplate {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: String| Err(ControllerError::InvalidTemplate(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(ControllerError::InvalidTemplate("template name must be non-empty".into()));
        }
        if self.trigger_keywords.iter().all(|k| k.trim().is_empty()) {
            return bad("needs at least one trigger keyword".into());
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.tool.is_empty() {
                return bad(format!("step {i} has no tool"));
            }
            let mut names = Vec::new();
            value_placeholders(&Value::Object(step.args_template.clone()), &mut names);
            if let Some(n) = names.iter().find(|n| !resolvable(n, i)) {
                return bad(format!("step {i} refers to unresolvable placeholder {{{{{n}}}}}"));
            }
        }
        if let Some(n) = placeholders(&self.response_template)
            .iter()
            .find(|n| !resolvable(n, self.steps.len()))
        {
            return bad(format!("response refers to unresolvable placeholder {{{{{n}}}}}"));
        }
        Ok(())
    }

    pub fn score(&self, query: &str) -> usize {
        let mut keys: Vec<&String> = self.trigger_keywords.iter().collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().filter(|k| has_keyword(query, k)).count()
    }

    /// Text added to prompts when this template applies.
    pub fn instructions(&self) -> String {
        let mut out = format!("Task template \"{}\".", self.name);
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "\nStep {}: call {} with {}.",
                i + 1,
                s.tool,
                Value::Object(s.args_template.clone())
            ));
        }
        out.push_str(&format!("\nReply in the form: {}", self.response_template));
        out
    }
}

/// Most keywords present wins; ties go to the smaller name.
pub fn select_plan_template<'a>(query: &str, library: &'a [PlanTemplate]) -> Option<&'a PlanTemplate> {
    library
        .iter()
        .map(|t| (t.score(query), t))
        .filter(|(s, _)| *s > 0)
        .max_by(|(sa, a), (sb, b)| sa.cmp(sb).then(b.name.cmp(&a.name)))
        .map(|(_, t)| t)
}

fn substitute(text: &str, slots: &PlanSlots) -> Result<String, ControllerError> {
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        let value = slots
            .get(name)
            .ok_or_else(|| ControllerError::PlanFailed(format!("unresolved placeholder {{{{{name}}}}}")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn substitute_value(v: &Value, slots: &PlanSlots) -> Result<Value, ControllerError> {
    Ok(match v {
        Value::String(s) => {
            let whole = placeholders(s).len() == 1 && s.trim().starts_with("{{") && s.trim().ends_with("}}");
            let text = substitute(s, slots)?;
            match text.parse::<f64>() {
                Ok(n) if whole && n.is_finite() => serde_json::Number::from_f64(n).map_or(Value::String(text), Value::Number),
                _ => Value::String(text),
            }
        }
        Value::Array(items) => Value::Array(items.iter().map(|i| substitute_value(i, slots)).collect::<Result<_, _>>()?),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| Ok((k.clone(), substitute_value(v, slots)?)))
                .collect::<Result<_, ControllerError>>()?,
        ),
        other => other.clone(),
    })
}

/// Runs every step in order and renders the reply.
pub fn execute_plan(
    template: &PlanTemplate,
    slots: &PlanSlots,
    registry: &ToolRegistry,
) -> Result<PlanOutcome, ControllerError> {
    template.validate()?;
    let mut slots = slots.clone();
    let mut results = Vec::new();
    for (i, step) in template.steps.iter().enumerate() {
        let Value::Object(arguments) = substitute_value(&Value::Object(step.args_template.clone()), &slots)? else {
            unreachable!("objects map to objects");
        };
        let result = dispatch_tool(
            &ToolCall {
                name: step.tool.clone(),
                arguments,
            },
            registry,
        );
        slots.insert(format!("steps.{i}.output"), result.output.clone());
        results.push(result);
    }
    Ok(PlanOutcome {
        template: template.name.clone(),
        reply: substitute(&template.response_template, &slots)?,
        results,
    })
}

/// Reads every `*.json` file in a directory, in file-name order.
pub fn load_templates(dir: &Path) -> Result<Vec<PlanTemplate>, ControllerError> {
    let read_dir = std::fs::read_dir(dir)
        .map_err(|e| ControllerError::InvalidTemplate(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = read_dir
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out: Vec<PlanTemplate> = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)
            .map_err(|e| ControllerError::InvalidTemplate(format!("{}: {e}", p.display())))?;
        let t: PlanTemplate = serde_json::from_str(&text)
            .map_err(|e| ControllerError::InvalidTemplate(format!("{}: {e}", p.display())))?;
        t.validate()?;
        if out.iter().any(|o| o.name == t.name) {
            return Err(ControllerError::InvalidTemplate(format!("duplicate template name {:?}", t.name)));
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn template(name: &str, keys: &[&str]) -> PlanTemplate {
        PlanTemplate {
            name: name.into(),
            trigger_keywords: keys.iter().map(|s| s.to_string()).collect(),
            steps: vec![],
            response_template: "ok".into(),
        }
    }

    #[test]
    fn most_keywords_win() {
        let lib = vec![template("morning", &["good", "morning"]), template("weather", &["weather"])];
        assert_eq!(select_plan_template("good morning", &lib).unwrap().name, "morning");
        assert!(select_plan_template("hello there", &lib).is_none());
    }

    #[test]
    fn ties_go_to_smaller_name() {
        let lib = vec![template("zeta", &["lamp"]), template("alpha", &["lamp"])];
        assert_eq!(select_plan_template("the lamp", &lib).unwrap().name, "alpha");
    }

    #[test]
    fn placeholders_are_checked() {
        let mut t = template("t", &["x"]);
        t.response_template = "{{steps.0.output}}".into();
        assert!(t.validate().is_err());
        t.steps.push(PlanStep {
            tool: "echo".into(),
            args_template: json!({"msg": "{{query}}"}).as_object().cloned().unwrap(),
        });
        t.validate().unwrap();
        t.response_template = "{{weather}}".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn plan_runs_steps_and_renders() {
        use crate::controller::tools::EchoTool;
        let mut reg = ToolRegistry::new();
        reg.register(EchoTool::schema(), std::sync::Arc::new(EchoTool));
        let t = PlanTemplate {
            name: "greet".into(),
            trigger_keywords: vec!["hello".into()],
            steps: vec![PlanStep {
                tool: "echo".into(),
                args_template: json!({"msg": "hi {{display_name}}"}).as_object().cloned().unwrap(),
            }],
            response_template: "{{steps.0.output}}, it is {{sensor.temp1}}".into(),
        };
        let slots = PlanSlots::from([
            ("display_name".to_string(), "Ada".to_string()),
            ("sensor.temp1".to_string(), "21.5C".to_string()),
        ]);
        let out = execute_plan(&t, &slots, &reg).unwrap();
        assert_eq!(out.reply, "hi Ada, it is 21.5C");
        let missing = execute_plan(&t, &PlanSlots::new(), &reg).unwrap_err();
        assert!(matches!(missing, ControllerError::PlanFailed(_)));
    }
}

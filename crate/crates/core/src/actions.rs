//! Device actions: an adapter registry with mock lamp, thermostat and
//! switch devices, plus the feedback rules that feed the cache.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cache::{CacheError, SemanticCache, SourceTier};
use crate::clock::{Clock, SystemClock};
use crate::controller::Tier;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("device {0:?} is already registered")]
    DuplicateDevice(String),
    #[error("unknown interaction {0}")]
    UnknownInteraction(u64),
    #[error("rating {0} is not one of -1, 0, 1")]
    InvalidRating(i64),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOrigin {
    Cache,
    CloudTool,
    EdgeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub device_id: String,
    pub capability: String,
    pub parameters: BTreeMap<String, Value>,
    pub origin: ActionOrigin,
}

impl Action {
    /// Single-valued capability call, the shape every mock device uses.
    pub fn set(device_id: &str, capability: &str, value: Value, origin: ActionOrigin) -> Self {
        Self {
            device_id: device_id.into(),
            capability: capability.into(),
            parameters: BTreeMap::from([("value".to_string(), value)]),
            origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub action: Action,
    pub ok: bool,
    pub detail: String,
    pub latency_ms: f64,
}

/// Accepted values for one capability's `value` parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ValueSpec {
    Choice { options: Vec<String> },
    IntRange { min: i64, max: i64 },
    FloatRange { min: f64, max: f64 },
}

impl ValueSpec {
    pub fn check(&self, v: &Value) -> Result<Value, String> {
        match self {
            ValueSpec::Choice { options } => {
                let s = v.as_str().ok_or_else(|| format!("expected one of {options:?}"))?;
                if options.iter().any(|o| o == s) {
                    Ok(Value::from(s))
                } else {
                    Err(format!("{s:?} is not one of {options:?}"))
                }
            }
            ValueSpec::IntRange { min, max } => {
                let n = v
                    .as_i64()
                    .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
                    .ok_or_else(|| format!("expected an integer in {min}..{max}"))?;
                if (*min..=*max).contains(&n) {
                    Ok(Value::from(n))
                } else {
                    Err(format!("{n} is outside the range {min}..{max}"))
                }
            }
            ValueSpec::FloatRange { min, max } => {
                let f = v
                    .as_f64()
                    .ok_or_else(|| format!("expected a number in {min}..{max}"))?;
                if f >= *min && f <= *max {
                    Ok(Value::from(f))
                } else {
                    Err(format!("{f} is outside the range {min}..{max}"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilitySpec {
    pub name: String,
    pub value: ValueSpec,
}

pub trait DeviceAdapter: Send {
    fn kind(&self) -> &str;
    fn capabilities(&self) -> &[CapabilitySpec];
    /// Applies an already validated value.
    fn apply(&mut self, capability: &str, value: Value) -> Result<(), String>;
    fn state(&self) -> BTreeMap<String, Value>;
}

/// In-memory device whose state is the last value set per capability.
#[derive(Debug, Clone)]
pub struct MockDevice {
    kind: String,
    caps: Vec<CapabilitySpec>,
    state: BTreeMap<String, Value>,
}

impl MockDevice {
    pub fn new(kind: &str, caps: Vec<CapabilitySpec>, initial: BTreeMap<String, Value>) -> Self {
        Self {
            kind: kind.into(),
            caps,
            state: initial,
        }
    }

    pub fn lamp() -> Self {
        Self::new(
            "lamp",
            vec![
                CapabilitySpec {
                    name: "power".into(),
                    value: ValueSpec::Choice {
                        options: vec!["on".into(), "off".into()],
                    },
                },
                CapabilitySpec {
                    name: "brightness".into(),
                    value: ValueSpec::IntRange { min: 0, max: 100 },
                },
            ],
            BTreeMap::from([
                ("power".into(), Value::from("off")),
                ("brightness".into(), Value::from(100)),
            ]),
        )
    }

    pub fn thermostat() -> Self {
        Self::new(
            "thermostat",
            vec![CapabilitySpec {
                name: "set_target".into(),
                value: ValueSpec::FloatRange { min: 10.0, max: 30.0 },
            }],
            BTreeMap::from([("set_target".into(), Value::from(20.0))]),
        )
    }

    pub fn switch() -> Self {
        Self::new(
            "switch",
            vec![CapabilitySpec {
                name: "power".into(),
                value: ValueSpec::Choice {
                    options: vec!["on".into(), "off".into()],
                },
            }],
            BTreeMap::from([("power".into(), Value::from("off"))]),
        )
    }

    pub fn by_kind(kind: &str) -> Option<Self> {
        match kind {
            "lamp" => Some(Self::lamp()),
            "thermostat" => Some(Self::thermostat()),
            "switch" => Some(Self::switch()),
            _ => None,
        }
    }
}

impl DeviceAdapter for MockDevice {
    fn kind(&self) -> &str {
        &self.kind
    }

    fn capabilities(&self) -> &[CapabilitySpec] {
        &self.caps
    }

    fn apply(&mut self, capability: &str, value: Value) -> Result<(), String> {
        self.state.insert(capability.to_string(), value);
        Ok(())
    }

    fn state(&self) -> BTreeMap<String, Value> {
        self.state.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub device_id: String,
    pub kind: String,
    pub capabilities: Vec<CapabilitySpec>,
}

/// Registry of device adapters. Each device serializes its own actions.
pub struct ActionExecutor {
    devices: RwLock<BTreeMap<String, Mutex<Box<dyn DeviceAdapter>>>>,
    clock: Arc<dyn Clock>,
}

impl Default for ActionExecutor {
    fn default() -> Self {
        Self::with_clock(Arc::new(SystemClock::default()))
    }
}

impl ActionExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Action latencies are measured on `clock`.
    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            devices: RwLock::new(BTreeMap::new()),
            clock,
        }
    }

    /// Registry with one lamp, thermostat and switch.
    pub fn with_mock_devices() -> Self {
        Self::new().add_mock_devices()
    }

    /// Adds a lamp, thermostat and switch under their kind names.
    pub fn add_mock_devices(self) -> Self {
        let ex = self;
        for kind in ["lamp", "thermostat", "switch"] {
            ex.register_device(kind, Box::new(MockDevice::by_kind(kind).expect("known kind")))
                .expect("fresh registry");
        }
        ex
    }

    pub fn register_device(&self, device_id: &str, adapter: Box<dyn DeviceAdapter>) -> Result<(), ActionError> {
        let mut devices = self.devices.write();
        if devices.contains_key(device_id) {
            return Err(ActionError::DuplicateDevice(device_id.into()));
        }
        devices.insert(device_id.into(), Mutex::new(adapter));
        Ok(())
    }

    pub fn inventory(&self) -> Vec<DeviceInfo> {
        self.devices
            .read()
            .iter()
            .map(|(id, d)| {
                let d = d.lock();
                DeviceInfo {
                    device_id: id.clone(),
                    kind: d.kind().to_string(),
                    capabilities: d.capabilities().to_vec(),
                }
            })
            .collect()
    }

    pub fn capability(&self, device_id: &str, capability: &str) -> Option<CapabilitySpec> {
        let devices = self.devices.read();
        let d = devices.get(device_id)?.lock();
        d.capabilities().iter().find(|c| c.name == capability).cloned()
    }

    /// Never fails: every problem is reported in the result.
    pub fn execute(&self, action: &Action) -> ActionResult {
        let started = self.clock.monotonic_us();
        let outcome = self.try_execute(action);
        let latency_ms = self.clock.monotonic_us().saturating_sub(started) as f64 / 1000.0;
        let (ok, detail) = match outcome {
            Ok(detail) => (true, detail),
            Err(detail) => (false, detail),
        };
        tracing::debug!(device = %action.device_id, capability = %action.capability, ok, "action");
        ActionResult {
            action: action.clone(),
            ok,
            detail,
            latency_ms,
        }
    }

    fn try_execute(&self, action: &Action) -> Result<String, String> {
        if action.device_id.is_empty() || action.capability.is_empty() {
            return Err("device_id and capability must be non-empty".into());
        }
        let devices = self.devices.read();
        let device = devices.get(&action.device_id).ok_or("unknown device")?;
        let mut device = device.lock();
        let spec = device
            .capabilities()
            .iter()
            .find(|c| c.name == action.capability)
            .cloned()
            .ok_or_else(|| format!("unknown capability {:?}", action.capability))?;
        if let Some(extra) = action.parameters.keys().find(|k| k.as_str() != "value") {
            return Err(format!("unexpected parameter {extra:?}"));
        }
        let raw = action.parameters.get("value").ok_or("missing parameter \"value\"")?;
        let value = spec.value.check(raw)?;
        device.apply(&action.capability, value.clone())?;
        Ok(format!("{} {} set to {}", action.device_id, action.capability, value))
    }

    /// `{device_id: {capability: value}}`
    pub fn state_dump(&self) -> Value {
        let map: serde_json::Map<String, Value> = self
            .devices
            .read()
            .iter()
            .map(|(id, d)| {
                let state: serde_json::Map<String, Value> = d.lock().state().into_iter().collect();
                (id.clone(), Value::Object(state))
            })
            .collect();
        Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Rating {
    Negative,
    Neutral,
    Positive,
}

impl TryFrom<i64> for Rating {
    type Error = ActionError;

    fn try_from(v: i64) -> Result<Self, ActionError> {
        match v {
            -1 => Ok(Rating::Negative),
            0 => Ok(Rating::Neutral),
            1 => Ok(Rating::Positive),
            other => Err(ActionError::InvalidRating(other)),
        }
    }
}

impl From<Rating> for i64 {
    fn from(r: Rating) -> i64 {
        match r {
            Rating::Negative => -1,
            Rating::Neutral => 0,
            Rating::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub interaction_id: u64,
    pub rating: Rating,
    pub timestamp_ms: u64,
}

/// What feedback needs to know about a past interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub interaction_id: u64,
    pub query: String,
    pub tier: Tier,
    pub reply: String,
    pub cache_entry_id: Option<u64>,
    pub actions: Vec<Action>,
}

pub trait InteractionLookup {
    fn find_interaction(&self, interaction_id: u64) -> Option<InteractionSummary>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", content = "entry_id", rename_all = "snake_case")]
pub enum FeedbackEffect {
    Inserted(u64),
    Reinforced(u64),
    Invalidated(u64),
    LoggedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub reinforce_hits: u64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { reinforce_hits: 2 }
    }
}

pub fn apply_feedback(
    record: &FeedbackRecord,
    log: &dyn InteractionLookup,
    cache: &mut SemanticCache,
    config: &FeedbackConfig,
) -> Result<FeedbackEffect, ActionError> {
    let ix = log
        .find_interaction(record.interaction_id)
        .ok_or(ActionError::UnknownInteraction(record.interaction_id))?;
    let now = record.timestamp_ms;
    let effect = match (record.rating, ix.tier) {
        (Rating::Neutral, _) | (_, Tier::Clarify) => FeedbackEffect::LoggedOnly,
        (Rating::Positive, Tier::EdgeModel | Tier::CloudLLM) => {
            if ix.query.trim().is_empty() || ix.reply.is_empty() {
                FeedbackEffect::LoggedOnly
            } else {
                let tier = if ix.tier == Tier::CloudLLM {
                    SourceTier::Cloud
                } else {
                    SourceTier::Edge
                };
                let action = ix.actions.first().cloned().map(|mut a| {
                    a.origin = ActionOrigin::Cache;
                    a
                });
                let entry = cache.insert(&ix.query, &ix.reply, action, tier, now)?;
                FeedbackEffect::Inserted(entry.id)
            }
        }
        (Rating::Positive, Tier::Cache) => match ix.cache_entry_id {
            Some(id) if cache.reinforce(id, config.reinforce_hits, now).is_ok() => {
                FeedbackEffect::Reinforced(id)
            }
            _ => FeedbackEffect::LoggedOnly,
        },
        (Rating::Negative, Tier::Cache) => match ix.cache_entry_id {
            Some(id) if cache.invalidate(id).is_ok() => FeedbackEffect::Invalidated(id),
            _ => FeedbackEffect::LoggedOnly,
        },
        (Rating::Negative, _) => FeedbackEffect::LoggedOnly,
    };
    tracing::info!(interaction = record.interaction_id, ?effect, "feedback");
    Ok(effect)
}

//! Per-request orchestration: audio front-end, recognition, cache,
//! routing, answer generation, device actions and logging.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use base64::Engine;
use ia_audio::{AudioError, Frontend};
use ia_core::actions::{ActionExecutor, FeedbackEffect, MockDevice};
use ia_core::asr::MockRegistryFile;
use ia_core::cache::{CacheHit, SemanticCache};
use ia_core::clock::{Clock, SystemClock};
use ia_core::context::{ContextSnapshot, FileProfileStore, ProfileStore, ReplaySource, SensorSource, SensorSpec};
use ia_core::controller::plan::{execute_plan, load_templates, PlanSlots};
use ia_core::controller::tools::DeviceControlTool;
use ia_core::controller::{
    build_prompt, call_cloud, edge_generate, route, select_plan_template, ChatTransport, CloudClient, Connectivity,
    ControllerError, EdgeModelAdapter, HttpTransport, MockEdgeModel, PlanTemplate, RouteInput, Tier, ToolRegistry,
    Turn,
};
use ia_core::controller::prompt::Role;
use ia_core::{
    apply_feedback, Action, ActionOrigin, ActionResult, AsrBridge, AsrError, FeedbackRecord, MockRegistry, Rating,
    SensorHub, Transcript, UserProfile,
};
use parking_lot::{Mutex, RwLock};

use crate::api::{
    FeedbackRequest, Input, InteractRequest, InteractResponse, StatsResponse, TierCounts, Timings, GatewayError,
};
use crate::config::GatewayConfig;
use crate::log::{FeedbackLog, FeedbackLogRecord, InteractionLog, InteractionRecord};

pub const CLARIFY_REPLY: &str = "Sorry, I didn't catch that. Could you say it again?";
pub const UNAVAILABLE_REPLY: &str = "Sorry, I can't answer that right now. Please try again in a moment.";
pub const ASR_UNAVAILABLE_REPLY: &str = "Sorry, I can't understand speech right now. Please try again or type your request.";

pub const CACHE_FILE: &str = "cache.json";
pub const INTERACTION_LOG: &str = "interactions.jsonl";
pub const FEEDBACK_LOG: &str = "feedback.jsonl";
pub const PROFILE_FILE: &str = "profiles.json";

/// Swappable collaborators; anything left `None` is built from the config.
#[derive(Default)]
pub struct GatewayParts {
    pub clock: Option<Arc<dyn Clock>>,
    pub transport: Option<Arc<dyn ChatTransport>>,
    pub edge: Option<Arc<dyn EdgeModelAdapter>>,
    pub mock_asr: Option<Arc<MockRegistry>>,
}

type SessionHistory = Arc<Mutex<Vec<Turn>>>;

pub struct Gateway {
    config: GatewayConfig,
    clock: Arc<dyn Clock>,
    frontend: Frontend,
    asr: AsrBridge,
    cache: Mutex<SemanticCache>,
    cache_path: PathBuf,
    sensors: Arc<SensorHub>,
    profiles: FileProfileStore,
    executor: Arc<ActionExecutor>,
    cloud_tools: ToolRegistry,
    edge_tools: ToolRegistry,
    templates: Vec<PlanTemplate>,
    edge: Arc<dyn EdgeModelAdapter>,
    cloud: Option<CloudClient>,
    connectivity: RwLock<Connectivity>,
    log: InteractionLog,
    feedback_log: FeedbackLog,
    sessions: Mutex<HashMap<String, SessionHistory>>,
    counts: Mutex<TierCounts>,
    next_id: AtomicU64,
    started_ms: u64,
}

/// What a successfully answered request produced.
struct Answer {
    transcript: Option<Transcript>,
    query: String,
    tier: Tier,
    reply: String,
    actions: Vec<ActionResult>,
    cache_entry_id: Option<u64>,
}

/// Per-stage microsecond stopwatch on the gateway clock.
struct Stopwatch<'a> {
    clock: &'a dyn Clock,
    timings: Timings,
}

impl Stopwatch<'_> {
    fn time<T>(&mut self, slot: fn(&mut Timings) -> &mut f64, f: impl FnOnce() -> T) -> T {
        let start = self.clock.monotonic_us();
        let out = f();
        *slot(&mut self.timings) += self.clock.monotonic_us().saturating_sub(start) as f64 / 1000.0;
        out
    }
}

fn internal(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Internal(e.to_string())
}

impl Gateway {
    pub fn open(config: GatewayConfig) -> anyhow::Result<Self> {
        Self::with_parts(config, GatewayParts::default())
    }

    pub fn with_parts(config: GatewayConfig, parts: GatewayParts) -> anyhow::Result<Self> {
        config.validate()?;
        let clock = parts.clock.unwrap_or_else(|| Arc::new(SystemClock::default()));
        let data_dir = &config.data_dir;
        std::fs::create_dir_all(data_dir)?;
        let now = clock.now_ms();

        let cache_path = data_dir.join(CACHE_FILE);
        let mut cache = SemanticCache::new(config.cache.clone())?;
        cache.load(&cache_path)?;

        let log = InteractionLog::open(data_dir.join(INTERACTION_LOG))?;
        let feedback_log = FeedbackLog::open(data_dir.join(FEEDBACK_LOG))?;
        let next_id = log.max_id() + 1;

        let executor = Arc::new(ActionExecutor::with_clock(clock.clone()));
        for d in &config.devices {
            let device = MockDevice::by_kind(&d.kind).ok_or_else(|| anyhow::anyhow!("unknown device kind {:?}", d.kind))?;
            executor.register_device(&d.id, Box::new(device))?;
        }

        let sensors = Arc::new(SensorHub::new());
        for s in &config.sensors {
            let source: Box<dyn SensorSource> = match (&s.replay, s.constant) {
                (Some(path), _) => Box::new(ReplaySource::from_path(path, &s.unit)?),
                (None, Some(v)) => {
                    let unit = s.unit.clone();
                    Box::new(move |_now: u64| Ok((v, unit.clone())))
                }
                (None, None) => anyhow::bail!("sensor {:?} has no source", s.id),
            };
            let spec = SensorSpec {
                sensor_id: s.id.clone(),
                kind: s.kind,
                unit: s.unit.clone(),
                interval_ms: s.interval_ms,
            };
            sensors.register_sensor(spec, source, now)?;
        }

        let profiles = FileProfileStore::open(data_dir.join(PROFILE_FILE))?;
        for p in &config.profiles {
            if profiles.get_profile(&p.user_id)?.as_ref() != Some(p) {
                profiles.upsert_profile(p.clone())?;
            }
        }

        let mock = parts.mock_asr.unwrap_or_default();
        if let Some(path) = &config.mock_asr {
            let file: MockRegistryFile = serde_json::from_slice(&std::fs::read(path)?)?;
            mock.load_records(&file).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        }
        let asr = AsrBridge::new(config.asr.clone(), mock)?;
        let frontend = Frontend::new(config.audio.clone())?;

        let mut cloud_tools = ToolRegistry::new();
        cloud_tools.register(
            DeviceControlTool::schema(&executor),
            Arc::new(DeviceControlTool::new(executor.clone(), ActionOrigin::CloudTool)),
        );
        let mut edge_tools = ToolRegistry::new();
        edge_tools.register(
            DeviceControlTool::schema(&executor),
            Arc::new(DeviceControlTool::new(executor.clone(), ActionOrigin::EdgeModel)),
        );
        let templates = match &config.templates_dir {
            Some(dir) => load_templates(dir)?,
            None => Vec::new(),
        };

        let edge = parts
            .edge
            .unwrap_or_else(|| Arc::new(MockEdgeModel::new(config.seed, config.edge.max_tokens)));
        let transport = parts.transport.or_else(|| {
            (!config.cloud.url.is_empty()).then(|| {
                Arc::new(HttpTransport::new(
                    &config.cloud.url,
                    &config.cloud.api_key,
                    std::time::Duration::from_millis(config.cloud.timeout_ms),
                )) as Arc<dyn ChatTransport>
            })
        });
        let cloud = transport.map(|t| CloudClient::new(t, &config.cloud.model));
        let connectivity = if cloud.is_some() {
            Connectivity::Online
        } else {
            Connectivity::Offline
        };

        Ok(Self {
            clock,
            frontend,
            asr,
            cache: Mutex::new(cache),
            cache_path,
            sensors,
            profiles,
            executor,
            cloud_tools,
            edge_tools,
            templates,
            edge,
            cloud,
            connectivity: RwLock::new(connectivity),
            log,
            feedback_log,
            sessions: Mutex::new(HashMap::new()),
            counts: Mutex::new(TierCounts::default()),
            next_id: AtomicU64::new(next_id),
            started_ms: now,
            config,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn executor(&self) -> &ActionExecutor {
        &self.executor
    }

    pub fn mock_registry(&self) -> &Arc<MockRegistry> {
        self.asr.mock_registry()
    }

    pub fn log(&self) -> &InteractionLog {
        &self.log
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    pub fn templates(&self) -> &[PlanTemplate] {
        &self.templates
    }

    pub fn connectivity(&self) -> Connectivity {
        *self.connectivity.read()
    }

    /// Offline is always honored; Online only takes effect with a cloud client.
    pub fn set_connectivity(&self, c: Connectivity) {
        *self.connectivity.write() = if self.cloud.is_some() { c } else { Connectivity::Offline };
    }

    pub fn upsert_profile(&self, profile: UserProfile) -> Result<(), GatewayError> {
        self.profiles.upsert_profile(profile).map_err(internal)
    }

    fn session(&self, session_id: &str) -> SessionHistory {
        self.sessions.lock().entry(session_id.to_string()).or_default().clone()
    }

    /// Handles one interaction and logs exactly one record for it,
    /// whatever the outcome.
    pub fn handle_interact(&self, request: &InteractRequest) -> Result<InteractResponse, GatewayError> {
        let started = self.clock.monotonic_us();
        let interaction_id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let now = self.clock.now_ms();
        let history = self.session(&request.session_id);
        let mut history = history.lock();
        let mut watch = Stopwatch {
            clock: self.clock.as_ref(),
            timings: Timings::default(),
        };
        let outcome = self.answer(interaction_id, request, now, &history, &mut watch);
        let mut timings = watch.timings;
        timings.total = self.clock.monotonic_us().saturating_sub(started) as f64 / 1000.0;

        let mut record = InteractionRecord {
            interaction_id,
            session_id: request.session_id.clone(),
            user_id: request.user_id.clone(),
            query: None,
            tier: None,
            reply: None,
            cache_entry_id: None,
            actions: Vec::new(),
            timings,
            timestamp: now,
            status: 200,
            error: None,
        };
        match &outcome {
            Ok(a) => {
                record.query = Some(a.query.clone());
                record.tier = Some(a.tier);
                record.reply = Some(a.reply.clone());
                record.cache_entry_id = a.cache_entry_id;
                record.actions = a.actions.clone();
            }
            Err(e) => {
                record.status = e.status();
                record.error = Some(e.to_string());
                if let GatewayError::Unavailable { reply_text, .. } = e {
                    record.reply = Some(reply_text.clone());
                }
            }
        }
        self.log.append(&record).map_err(internal)?;

        let answer = match outcome {
            Ok(a) => a,
            Err(e) => {
                self.counts.lock().failed += 1;
                return Err(e);
            }
        };
        self.counts.lock().bump(answer.tier);
        if answer.tier != Tier::Clarify {
            history.push(Turn {
                role: Role::User,
                content: answer.query.clone(),
            });
            history.push(Turn {
                role: Role::Assistant,
                content: answer.reply.clone(),
            });
            let keep = 2 * self.config.prompt.max_history_turns.max(1);
            if history.len() > keep {
                let excess = history.len() - keep;
                history.drain(..excess);
            }
        }
        tracing::info!(interaction_id, tier = ?answer.tier, "interaction");
        Ok(InteractResponse {
            interaction_id,
            transcript: answer.transcript,
            source_tier: answer.tier,
            reply_text: answer.reply,
            actions: answer.actions,
            timing_ms: timings,
        })
    }

    /// Logs a request body that could not be parsed at all.
    pub fn reject_unparsed(&self, error: GatewayError) -> GatewayError {
        let interaction_id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let record = InteractionRecord {
            interaction_id,
            session_id: String::new(),
            user_id: String::new(),
            query: None,
            tier: None,
            reply: None,
            cache_entry_id: None,
            actions: Vec::new(),
            timings: Timings::default(),
            timestamp: self.clock.now_ms(),
            status: error.status(),
            error: Some(error.to_string()),
        };
        self.counts.lock().failed += 1;
        match self.log.append(&record) {
            Ok(()) => error,
            Err(e) => internal(e),
        }
    }

    fn answer(
        &self,
        interaction_id: u64,
        request: &InteractRequest,
        now: u64,
        history: &[Turn],
        watch: &mut Stopwatch<'_>,
    ) -> Result<Answer, GatewayError> {
        let unavailable = |reply: &str, detail: String| GatewayError::Unavailable {
            interaction_id,
            reply_text: reply.to_string(),
            detail,
        };
        let (query, transcript, low_confidence) = match request.input()? {
            Input::Text(text) => (text, None, false),
            Input::AudioWav(b64) => {
                let utterance = watch.time(|t| &mut t.audio, || self.decode_audio(&b64))?;
                match watch.time(|t| &mut t.asr, || self.asr.transcribe(&utterance)) {
                    Ok(t) if t.text.trim().is_empty() => (String::new(), Some(t), true),
                    Ok(t) => (t.text.clone(), Some(t), false),
                    Err(AsrError::LowConfidence { .. }) => (String::new(), None, true),
                    Err(e) => return Err(unavailable(ASR_UNAVAILABLE_REPLY, e.to_string())),
                }
            }
        };

        let hit: Option<CacheHit> = if low_confidence {
            None
        } else {
            watch.time(|t| &mut t.cache, || self.cache.lock().lookup(&query, now))
        };
        if hit.is_some() {
            self.persist_cache();
        }

        let triggers = self.cloud_tools.trigger_keywords();
        let connectivity = self.connectivity();
        let decision = route(
            &RouteInput {
                text: &query,
                low_confidence,
                cache_similarity: hit.as_ref().map(|h| h.similarity),
                connectivity,
                tool_triggers: &triggers,
            },
            &self.config.routing,
        );
        let tier = match request.options.force_tier {
            Some(Tier::Cache) if hit.is_none() => decision.tier,
            Some(Tier::CloudLLM) if connectivity == Connectivity::Offline => decision.tier,
            Some(t) if !low_confidence => t,
            _ => decision.tier,
        };
        tracing::debug!(interaction_id, ?decision, ?tier, "route");

        let answer = |tier, reply, actions, cache_entry_id| Answer {
            transcript: transcript.clone(),
            query: query.clone(),
            tier,
            reply,
            actions,
            cache_entry_id,
        };
        match tier {
            Tier::Clarify => Ok(answer(Tier::Clarify, CLARIFY_REPLY.to_string(), vec![], None)),
            Tier::Cache => {
                let entry = hit.expect("cache tier implies a hit").entry;
                let actions = watch.time(
                    |t| &mut t.execute,
                    || {
                        entry
                            .action
                            .iter()
                            .map(|a| {
                                self.executor.execute(&Action {
                                    origin: ActionOrigin::Cache,
                                    ..a.clone()
                                })
                            })
                            .collect()
                    },
                );
                Ok(answer(Tier::Cache, entry.response_text, actions, Some(entry.id)))
            }
            Tier::EdgeModel => match self.answer_edge(&query, request, now, history, watch) {
                Ok((reply, actions)) => Ok(answer(Tier::EdgeModel, reply, actions, None)),
                Err(edge_err) if connectivity == Connectivity::Online => {
                    tracing::warn!(error = %edge_err, "edge model failed, trying the cloud");
                    match self.answer_cloud(&query, request, now, history, watch) {
                        Ok((reply, actions)) => Ok(answer(Tier::CloudLLM, reply, actions, None)),
                        Err(e) => Err(unavailable(UNAVAILABLE_REPLY, format!("edge: {edge_err}; cloud: {e}"))),
                    }
                }
                Err(e) => Err(unavailable(UNAVAILABLE_REPLY, format!("edge: {e}"))),
            },
            Tier::CloudLLM => match self.answer_cloud(&query, request, now, history, watch) {
                Ok((reply, actions)) => Ok(answer(Tier::CloudLLM, reply, actions, None)),
                Err(cloud_err) => {
                    tracing::warn!(error = %cloud_err, "cloud failed, falling back to the edge model");
                    match self.answer_edge(&query, request, now, history, watch) {
                        Ok((reply, actions)) => Ok(answer(Tier::EdgeModel, reply, actions, None)),
                        Err(e) => Err(unavailable(UNAVAILABLE_REPLY, format!("cloud: {cloud_err}; edge: {e}"))),
                    }
                }
            },
        }
    }

    fn decode_audio(&self, b64: &str) -> Result<ia_audio::CleanUtterance, GatewayError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| GatewayError::BadRequest(format!("audio payload is not base64: {e}")))?;
        let wav = ia_audio::wav::read_wav_bytes(&bytes).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        if wav.sample_rate_hz != self.frontend.config().sample_rate_hz {
            return Err(GatewayError::BadRequest(format!(
                "audio must be sampled at {} Hz, got {}",
                self.frontend.config().sample_rate_hz,
                wav.sample_rate_hz
            )));
        }
        self.frontend.process(&wav.samples, None).map_err(|e| match e {
            AudioError::EmptySignal => GatewayError::BadRequest("audio is shorter than one frame".into()),
            other => internal(other),
        })
    }

    fn context(&self, request: &InteractRequest, now: u64) -> (ContextSnapshot, Option<UserProfile>) {
        self.sensors.tick(now);
        let snapshot = self.sensors.snapshot(&request.session_id, now);
        let profile = self.profiles.get_profile(&request.user_id).ok().flatten();
        (snapshot, profile)
    }

    fn slots(&self, query: &str, request: &InteractRequest, snapshot: &ContextSnapshot, profile: Option<&UserProfile>) -> PlanSlots {
        let mut slots = PlanSlots::new();
        slots.insert("query".into(), query.to_string());
        slots.insert("user_id".into(), request.user_id.clone());
        slots.insert(
            "display_name".into(),
            profile.map_or_else(|| request.user_id.clone(), |p| p.display_name.clone()),
        );
        if let Some(p) = profile {
            for (k, v) in &p.preferences {
                slots.insert(format!("pref.{k}"), v.clone());
            }
        }
        for (id, status) in &snapshot.sensors {
            let value = status
                .reading
                .as_ref()
                .map_or_else(|| "unknown".to_string(), |r| format!("{:.1}{}", r.value, r.unit));
            slots.insert(format!("sensor.{id}"), value);
        }
        slots
    }

    /// A matching plan template if one applies, otherwise the edge model.
    fn answer_edge(
        &self,
        query: &str,
        request: &InteractRequest,
        now: u64,
        history: &[Turn],
        watch: &mut Stopwatch<'_>,
    ) -> Result<(String, Vec<ActionResult>), ControllerError> {
        let (snapshot, profile) = self.context(request, now);
        let template = select_plan_template(query, &self.templates);
        if let Some(t) = template {
            let slots = self.slots(query, request, &snapshot, profile.as_ref());
            match watch.time(|t| &mut t.execute, || execute_plan(t, &slots, &self.edge_tools)) {
                Ok(outcome) => {
                    let actions = outcome.results.into_iter().filter_map(|r| r.action).collect();
                    return Ok((outcome.reply, actions));
                }
                Err(e) => tracing::warn!(template = %t.name, error = %e, "plan failed, using the edge model"),
            }
        }
        let bundle = build_prompt(query, &snapshot, profile.as_ref(), history, None, &[], &self.config.prompt);
        let reply = watch.time(|t| &mut t.llm, || edge_generate(&bundle, self.edge.as_ref()))?;
        Ok((reply, Vec::new()))
    }

    fn answer_cloud(
        &self,
        query: &str,
        request: &InteractRequest,
        now: u64,
        history: &[Turn],
        watch: &mut Stopwatch<'_>,
    ) -> Result<(String, Vec<ActionResult>), ControllerError> {
        let client = self
            .cloud
            .as_ref()
            .ok_or_else(|| ControllerError::CloudUnreachable("no cloud endpoint configured".into()))?;
        let (snapshot, profile) = self.context(request, now);
        let template = select_plan_template(query, &self.templates);
        let bundle = build_prompt(
            query,
            &snapshot,
            profile.as_ref(),
            history,
            template,
            &self.cloud_tools.schemas(),
            &self.config.prompt,
        );
        let reply = watch.time(|t| &mut t.llm, || call_cloud(&bundle, client, &self.cloud_tools))?;
        let actions: Vec<ActionResult> = reply.tool_calls.into_iter().filter_map(|c| c.result.action).collect();
        // device time happened inside the cloud loop; book it under execute
        let device_ms: f64 = actions.iter().map(|a| a.latency_ms).sum();
        let moved = device_ms.min(watch.timings.llm);
        watch.timings.llm -= moved;
        watch.timings.execute += moved;
        Ok((reply.text, actions))
    }

    fn persist_cache(&self) {
        let cache = self.cache.lock();
        if let Err(e) = cache.persist(&self.cache_path) {
            tracing::error!(error = %e, "failed to persist the cache");
        }
    }

    pub fn handle_feedback(&self, request: &FeedbackRequest) -> Result<FeedbackEffect, GatewayError> {
        let rating = Rating::try_from(request.rating).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        let record = FeedbackRecord {
            interaction_id: request.interaction_id,
            rating,
            timestamp_ms: self.clock.now_ms(),
        };
        let effect = {
            let mut cache = self.cache.lock();
            let effect = apply_feedback(&record, &self.log, &mut cache, &self.config.feedback).map_err(|e| match e {
                ia_core::actions::ActionError::UnknownInteraction(id) => GatewayError::NotFound(id),
                other => internal(other),
            })?;
            if effect != FeedbackEffect::LoggedOnly {
                cache.persist(&self.cache_path).map_err(internal)?;
            }
            effect
        };
        self.feedback_log
            .append(&FeedbackLogRecord { record, effect })
            .map_err(internal)?;
        Ok(effect)
    }

    pub fn handle_stats(&self) -> StatsResponse {
        let cache = self.cache.lock().stats();
        let requests = *self.counts.lock();
        StatsResponse {
            cache,
            uptime_s: self.clock.now_ms().saturating_sub(self.started_ms) / 1000,
            requests,
        }
    }

    pub fn sensors_snapshot(&self) -> ContextSnapshot {
        let now = self.clock.now_ms();
        self.sensors.tick(now);
        self.sensors.snapshot("", now)
    }

    /// Expires, purges and evicts cache entries, then persists.
    pub fn maintain(&self) -> ia_core::CacheStats {
        let delta = self.cache.lock().maintain(self.clock.now_ms());
        self.persist_cache();
        delta
    }

    /// Writes the cache file; called on shutdown.
    pub fn flush(&self) -> Result<(), GatewayError> {
        self.cache.lock().persist(&self.cache_path).map_err(internal)
    }
}

//! Recorded sessions: a JSON-lines file of interactions (with the cloud
//! replies they consumed) and feedback, replayable against mocks on a
//! pinned clock.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ia_core::asr::{MockRegistryFile, MockRegistryRecord};
use ia_core::clock::ManualClock;
use ia_core::controller::wire::ChatResponse;
use ia_core::controller::{ChatTransport, ScriptedTransport};
use ia_core::{MockRegistry, UserProfile};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::api::{FeedbackRequest, InteractRequest};
use crate::config::GatewayConfig;
use crate::gateway::{Gateway, GatewayParts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSetup {
    /// Wall clock at the first event.
    pub start_ms: u64,
    /// Clock advance before each event.
    #[serde(default = "default_step")]
    pub step_ms: u64,
    #[serde(default)]
    pub seed: u64,
    /// Whether a cloud endpoint is reachable; its replies come from the events.
    #[serde(default)]
    pub online: bool,
    /// Relative paths resolve against the session file's directory.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub mock_asr: Vec<MockRegistryRecord>,
    #[serde(default)]
    pub profiles: Vec<UserProfile>,
}

fn default_step() -> u64 {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEvent {
    Setup(SessionSetup),
    Interact {
        request: InteractRequest,
        /// Cloud replies handed out, in order, while this request runs.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        cloud: Vec<ChatResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<Value>,
    },
    Feedback {
        request: FeedbackRequest,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    /// 1-based line in the session file.
    pub line: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReplayReport {
    pub interactions: usize,
    pub feedback: usize,
    /// Events with nothing recorded yet.
    pub unrecorded: usize,
    pub mismatches: Vec<Mismatch>,
    /// The session with freshly produced outcomes filled in.
    #[serde(skip)]
    pub updated: Vec<SessionEvent>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty() && self.unrecorded == 0
    }
}

pub fn read_session(path: &Path) -> anyhow::Result<Vec<SessionEvent>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}

pub fn write_session(path: &Path, events: &[SessionEvent]) -> anyhow::Result<()> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, out.as_bytes())?;
    tmp.persist(path)?;
    Ok(())
}

/// Canonical text of a JSON value: keys sorted, no whitespace.
pub fn canonical(v: &Value) -> String {
    serde_json::to_string(v).expect("JSON values serialize")
}

/// Runs the events on a fresh gateway rooted in `data_dir`.
pub fn replay(
    events: &[SessionEvent],
    base: &GatewayConfig,
    session_dir: &Path,
    data_dir: &Path,
) -> anyhow::Result<ReplayReport> {
    let setup = match events.first() {
        Some(SessionEvent::Setup(s)) => s.clone(),
        _ => anyhow::bail!("a session must start with a setup event"),
    };
    let mut config = base.clone();
    config.data_dir = data_dir.to_path_buf();
    config.seed = setup.seed;
    config.mock_asr = None;
    config.profiles = setup.profiles.clone();
    if let Some(dir) = &setup.templates_dir {
        config.templates_dir = Some(session_dir.join(dir));
    }

    let clock = Arc::new(ManualClock::new(setup.start_ms));
    let mock = Arc::new(MockRegistry::new());
    mock.load_records(&MockRegistryFile {
        entries: setup.mock_asr.clone(),
    })
    .map_err(|e| anyhow::anyhow!("setup.mock_asr: {e}"))?;
    let transport = Arc::new(ScriptedTransport::new(Vec::new()));
    let gateway = Gateway::with_parts(
        config,
        GatewayParts {
            clock: Some(clock.clone()),
            transport: setup.online.then(|| transport.clone() as Arc<dyn ChatTransport>),
            edge: None,
            mock_asr: Some(mock),
        },
    )?;

    let mut report = ReplayReport {
        updated: vec![SessionEvent::Setup(setup.clone())],
        ..Default::default()
    };
    for (i, event) in events.iter().enumerate().skip(1) {
        let line = i + 1;
        clock.advance_ms(setup.step_ms);
        match event {
            SessionEvent::Setup(_) => anyhow::bail!("line {line}: setup may only appear first"),
            SessionEvent::Interact {
                request,
                cloud,
                status,
                response,
            } => {
                report.interactions += 1;
                for r in cloud {
                    transport.push(Ok(r.clone()));
                }
                let (got_status, got) = match gateway.handle_interact(request) {
                    Ok(r) => (200, serde_json::to_value(&r)?),
                    Err(e) => (e.status(), e.body()),
                };
                let unused = transport.clear_script();
                if unused > 0 {
                    tracing::warn!(line, unused, "recorded cloud replies were not consumed");
                }
                match (status, response) {
                    (Some(s), Some(expected)) => {
                        let (want, have) = (
                            format!("{s} {}", canonical(expected)),
                            format!("{got_status} {}", canonical(&got)),
                        );
                        if want != have {
                            report.mismatches.push(Mismatch {
                                line,
                                expected: want,
                                actual: have,
                            });
                        }
                    }
                    _ => report.unrecorded += 1,
                }
                report.updated.push(SessionEvent::Interact {
                    request: request.clone(),
                    cloud: cloud.clone(),
                    status: Some(got_status),
                    response: Some(got),
                });
            }
            SessionEvent::Feedback { request, status } => {
                report.feedback += 1;
                let got_status = match gateway.handle_feedback(request) {
                    Ok(_) => 204,
                    Err(e) => e.status(),
                };
                match status {
                    Some(s) if *s != got_status => report.mismatches.push(Mismatch {
                        line,
                        expected: s.to_string(),
                        actual: got_status.to_string(),
                    }),
                    Some(_) => {}
                    None => report.unrecorded += 1,
                }
                report.updated.push(SessionEvent::Feedback {
                    request: request.clone(),
                    status: Some(got_status),
                });
            }
        }
    }
    Ok(report)
}

/// Replays a session file in a throwaway data directory.
pub fn replay_file(path: &Path, base: &GatewayConfig) -> anyhow::Result<ReplayReport> {
    let events = read_session(path)?;
    let data = tempfile::tempdir()?;
    let session_dir = path.parent().unwrap_or(Path::new("."));
    replay(&events, base, session_dir, data.path())
}

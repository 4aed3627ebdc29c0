//! Environmental sensor ingestion, context snapshots for prompts, and user
//! profiles.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

pub const RING_CAPACITY: usize = 1_024;
pub const STALENESS_FACTOR: u64 = 3;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("sensor {0:?} is already registered")]
    DuplicateSensor(String),
    #[error("unknown sensor {0:?}")]
    UnknownSensor(String),
    #[error("invalid sensor spec: {0}")]
    InvalidSensor(String),
    #[error("reading for {sensor} at {timestamp_ms} ms is older than the last one at {last_ms} ms")]
    OutOfOrder {
        sensor: String,
        timestamp_ms: u64,
        last_ms: u64,
    },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("replay source: {0}")]
    Replay(String),
    #[error("profile store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt profile store: {0}")]
    CorruptStore(String),
}

pub type Result<T> = std::result::Result<T, ContextError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Temperature,
    Humidity,
    Motion,
    InfraredPresence,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub unit: String,
    pub interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor_id: String,
    pub value: f64,
    pub unit: String,
    pub timestamp_ms: u64,
}

/// Anything that can produce a current value on request.
pub trait SensorSource: Send {
    fn sample(&mut self, now_ms: u64) -> std::result::Result<(f64, String), String>;
}

impl<F> SensorSource for F
where
    F: FnMut(u64) -> std::result::Result<(f64, String), String> + Send,
{
    fn sample(&mut self, now_ms: u64) -> std::result::Result<(f64, String), String> {
        self(now_ms)
    }
}

/// Replays a `timestamp_ms,value` CSV: the value at `now` is the last row
/// at or before it.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    unit: String,
    rows: Vec<(u64, f64)>,
}

#[derive(Debug, Deserialize)]
struct ReplayRow {
    timestamp_ms: u64,
    value: f64,
}

impl ReplaySource {
    pub fn from_reader<R: std::io::Read>(reader: R, unit: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<ReplayRow>() {
            let r = rec.map_err(|e| ContextError::Replay(e.to_string()))?;
            if rows.last().is_some_and(|(t, _)| *t > r.timestamp_ms) {
                return Err(ContextError::Replay(format!(
                    "timestamps go backwards at {}",
                    r.timestamp_ms
                )));
            }
            rows.push((r.timestamp_ms, r.value));
        }
        Ok(Self {
            unit: unit.to_string(),
            rows,
        })
    }

    pub fn from_path(path: &Path, unit: &str) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(f, unit)
    }

    pub fn rows(&self) -> &[(u64, f64)] {
        &self.rows
    }
}

impl SensorSource for ReplaySource {
    fn sample(&mut self, now_ms: u64) -> std::result::Result<(f64, String), String> {
        let idx = self.rows.partition_point(|(t, _)| *t <= now_ms);
        if idx == 0 {
            return Err(format!("no replay data at or before {now_ms} ms"));
        }
        Ok((self.rows[idx - 1].1, self.unit.clone()))
    }
}

struct SensorSlot {
    spec: SensorSpec,
    source: Mutex<Box<dyn SensorSource>>,
    buffer: Mutex<VecDeque<SensorReading>>,
    next_due_ms: Mutex<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorStatus {
    pub kind: SensorKind,
    pub unit: String,
    pub interval_ms: u64,
    pub reading: Option<SensorReading>,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub session_id: String,
    pub wall_time_ms: u64,
    pub sensors: BTreeMap<String, SensorStatus>,
}

/// Sensor registry with a bounded history per sensor.
#[derive(Default)]
pub struct SensorHub {
    sensors: RwLock<BTreeMap<String, Arc<SensorSlot>>>,
}

impl SensorHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a sensor; its first poll is due at `now_ms`.
    pub fn register_sensor(&self, spec: SensorSpec, source: Box<dyn SensorSource>, now_ms: u64) -> Result<()> {
        if spec.sensor_id.is_empty() {
            return Err(ContextError::InvalidSensor("sensor_id must be non-empty".into()));
        }
        if spec.interval_ms == 0 {
            return Err(ContextError::InvalidSensor("interval_ms must be > 0".into()));
        }
        let mut sensors = self.sensors.write();
        if sensors.contains_key(&spec.sensor_id) {
            return Err(ContextError::DuplicateSensor(spec.sensor_id));
        }
        sensors.insert(
            spec.sensor_id.clone(),
            Arc::new(SensorSlot {
                spec,
                source: Mutex::new(source),
                buffer: Mutex::new(VecDeque::with_capacity(RING_CAPACITY)),
                next_due_ms: Mutex::new(now_ms),
            }),
        );
        Ok(())
    }

    pub fn specs(&self) -> Vec<SensorSpec> {
        self.sensors.read().values().map(|s| s.spec.clone()).collect()
    }

    /// Appends a reading, keeping only the newest [`RING_CAPACITY`].
    pub fn ingest(&self, reading: SensorReading) -> Result<()> {
        let slot = self
            .sensors
            .read()
            .get(&reading.sensor_id)
            .cloned()
            .ok_or_else(|| ContextError::UnknownSensor(reading.sensor_id.clone()))?;
        push_reading(&slot, reading)
    }

    /// Polls every sensor that is due. Returns the number of readings taken.
    pub fn tick(&self, now_ms: u64) -> usize {
        let slots: Vec<Arc<SensorSlot>> = self.sensors.read().values().cloned().collect();
        let mut taken = 0;
        for slot in slots {
            let mut due = slot.next_due_ms.lock();
            if now_ms < *due {
                continue;
            }
            let interval = slot.spec.interval_ms;
            let missed = (now_ms - *due) / interval;
            *due += (missed + 1) * interval;
            drop(due);
            let sample = slot.source.lock().sample(now_ms);
            match sample {
                Ok((value, unit)) => {
                    let reading = SensorReading {
                        sensor_id: slot.spec.sensor_id.clone(),
                        value,
                        unit,
                        timestamp_ms: now_ms,
                    };
                    if push_reading(&slot, reading).is_ok() {
                        taken += 1;
                    }
                }
                Err(e) => tracing::warn!(sensor = %slot.spec.sensor_id, error = %e, "sensor poll failed"),
            }
        }
        taken
    }

    pub fn readings(&self, sensor_id: &str) -> Vec<SensorReading> {
        self.sensors
            .read()
            .get(sensor_id)
            .map(|s| s.buffer.lock().iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn snapshot(&self, session_id: &str, now_ms: u64) -> ContextSnapshot {
        let sensors = self
            .sensors
            .read()
            .iter()
            .map(|(id, slot)| {
                let reading = slot.buffer.lock().back().cloned();
                let stale = match &reading {
                    Some(r) => {
                        now_ms.saturating_sub(r.timestamp_ms) > STALENESS_FACTOR * slot.spec.interval_ms
                    }
                    None => true,
                };
                (
                    id.clone(),
                    SensorStatus {
                        kind: slot.spec.kind,
                        unit: slot.spec.unit.clone(),
                        interval_ms: slot.spec.interval_ms,
                        reading,
                        stale,
                    },
                )
            })
            .collect();
        ContextSnapshot {
            session_id: session_id.to_string(),
            wall_time_ms: now_ms,
            sensors,
        }
    }

    /// Polls on a background thread until the handle is stopped or dropped.
    pub fn spawn_poller(self: &Arc<Self>, clock: Arc<dyn Clock>, period: Duration) -> PollerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let hub = Arc::clone(self);
        let flag = Arc::clone(&stop);
        let join = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                hub.tick(clock.now_ms());
                std::thread::sleep(period);
            }
        });
        PollerHandle {
            stop,
            join: Some(join),
        }
    }
}

fn push_reading(slot: &SensorSlot, reading: SensorReading) -> Result<()> {
    let mut buf = slot.buffer.lock();
    if let Some(last) = buf.back() {
        if reading.timestamp_ms < last.timestamp_ms {
            return Err(ContextError::OutOfOrder {
                sensor: reading.sensor_id,
                timestamp_ms: reading.timestamp_ms,
                last_ms: last.timestamp_ms,
            });
        }
    }
    if buf.len() == RING_CAPACITY {
        buf.pop_front();
    }
    buf.push_back(reading);
    Ok(())
}

pub struct PollerHandle {
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl PollerHandle {
    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for PollerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    #[serde(default)]
    pub preferences: BTreeMap<String, String>,
    pub created_at: u64,
}

/// One line per sensor as `<id>=<value><unit> (<age>s old)`, sorted by id,
/// then the profile preferences as `pref.<key>=<value>`.
pub fn format_context_for_prompt(snapshot: &ContextSnapshot, profile: Option<&UserProfile>) -> String {
    let mut lines = Vec::new();
    for (id, status) in &snapshot.sensors {
        match &status.reading {
            Some(r) => {
                let age_s = snapshot.wall_time_ms.saturating_sub(r.timestamp_ms) / 1000;
                let stale = if status.stale { " [stale]" } else { "" };
                lines.push(format!("{id}={:.1}{} ({age_s}s old){stale}", r.value, r.unit));
            }
            None => lines.push(format!("{id}=absent")),
        }
    }
    if let Some(p) = profile {
        for (k, v) in &p.preferences {
            lines.push(format!("pref.{k}={v}"));
        }
    }
    lines.join("\n")
}

pub trait ProfileStore: Send + Sync {
    fn upsert_profile(&self, profile: UserProfile) -> Result<()>;
    fn get_profile(&self, user_id: &str) -> Result<Option<UserProfile>>;
}

fn check_profile(p: &UserProfile) -> Result<()> {
    if p.user_id.trim().is_empty() {
        return Err(ContextError::InvalidProfile("user_id must be non-empty".into()));
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct MemoryProfileStore {
    profiles: RwLock<BTreeMap<String, UserProfile>>,
}

impl ProfileStore for MemoryProfileStore {
    fn upsert_profile(&self, profile: UserProfile) -> Result<()> {
        check_profile(&profile)?;
        self.profiles.write().insert(profile.user_id.clone(), profile);
        Ok(())
    }

    fn get_profile(&self, user_id: &str) -> Result<Option<UserProfile>> {
        Ok(self.profiles.read().get(user_id).cloned())
    }
}

/// All profiles in one JSON document, rewritten atomically on each upsert.
#[derive(Debug)]
pub struct FileProfileStore {
    path: PathBuf,
    profiles: RwLock<BTreeMap<String, UserProfile>>,
}

impl FileProfileStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let profiles = match std::fs::read(&path) {
            Ok(bytes) => {
                let list: Vec<UserProfile> =
                    serde_json::from_slice(&bytes).map_err(|e| ContextError::CorruptStore(e.to_string()))?;
                list.into_iter().map(|p| (p.user_id.clone(), p)).collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            path,
            profiles: RwLock::new(profiles),
        })
    }

    fn write(&self, profiles: &BTreeMap<String, UserProfile>) -> Result<()> {
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir)?;
        let list: Vec<&UserProfile> = profiles.values().collect();
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, &list).map_err(|e| ContextError::CorruptStore(e.to_string()))?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&self.path).map_err(|e| ContextError::Io(e.error))?;
        Ok(())
    }
}

impl ProfileStore for FileProfileStore {
    fn upsert_profile(&self, profile: UserProfile) -> Result<()> {
        check_profile(&profile)?;
        let mut profiles = self.profiles.write();
        let mut next = profiles.clone();
        next.insert(profile.user_id.clone(), profile);
        self.write(&next)?;
        *profiles = next;
        Ok(())
    }

    fn get_profile(&self, user_id: &str) -> Result<Option<UserProfile>> {
        Ok(self.profiles.read().get(user_id).cloned())
    }
}

//! Append-only JSON-lines logs of interactions and feedback.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ia_core::actions::FeedbackEffect;
use ia_core::controller::Tier;
use ia_core::{ActionResult, FeedbackRecord, InteractionLookup, InteractionSummary};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::api::Timings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub interaction_id: u64,
    pub session_id: String,
    pub user_id: String,
    /// The text that was answered: the typed query or the transcript.
    pub query: Option<String>,
    pub tier: Option<Tier>,
    pub reply: Option<String>,
    pub cache_entry_id: Option<u64>,
    pub actions: Vec<ActionResult>,
    pub timings: Timings,
    pub timestamp: u64,
    pub status: u16,
    /// Set on error records.
    pub error: Option<String>,
}

impl InteractionRecord {
    fn summary(&self) -> Option<InteractionSummary> {
        Some(InteractionSummary {
            interaction_id: self.interaction_id,
            query: self.query.clone()?,
            tier: self.tier?,
            reply: self.reply.clone()?,
            cache_entry_id: self.cache_entry_id,
            actions: self
                .actions
                .iter()
                .filter(|a| a.ok)
                .map(|a| a.action.clone())
                .collect(),
        })
    }
}

/// Opens a JSONL file for appending, dropping a torn final line left by a
/// crash mid-write. Returns the parsed complete lines.
fn open_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<(File, Vec<T>)> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    let mut good_len = 0u64;
    if let Ok(f) = File::open(path) {
        let mut reader = BufReader::new(f);
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            match serde_json::from_str(line.trim_end()) {
                Ok(row) => rows.push(row),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable log line"),
            }
            good_len += n as u64;
        }
    }
    let file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
    }
    Ok((file, rows))
}

fn append_line<T: Serialize>(file: &mut File, row: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(row).map_err(std::io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()
}

/// Interaction log with an in-memory index for feedback lookups.
pub struct InteractionLog {
    path: PathBuf,
    file: Mutex<File>,
    index: RwLock<HashMap<u64, InteractionRecord>>,
}

impl InteractionLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let (file, rows) = open_jsonl::<InteractionRecord>(&path)?;
        let index = rows.into_iter().map(|r| (r.interaction_id, r)).collect();
        Ok(Self {
            path,
            file: Mutex::new(file),
            index: RwLock::new(index),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn max_id(&self) -> u64 {
        self.index.read().keys().copied().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.index.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes and syncs one record before returning.
    pub fn append(&self, record: &InteractionRecord) -> std::io::Result<()> {
        append_line(&mut self.file.lock(), record)?;
        self.index.write().insert(record.interaction_id, record.clone());
        Ok(())
    }

    pub fn get(&self, interaction_id: u64) -> Option<InteractionRecord> {
        self.index.read().get(&interaction_id).cloned()
    }

    /// Every record currently on disk, in file order.
    pub fn read_all(&self) -> std::io::Result<Vec<InteractionRecord>> {
        let _guard = self.file.lock();
        let text = std::fs::read_to_string(&self.path)?;
        text.lines()
            .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
            .collect()
    }
}

impl InteractionLookup for InteractionLog {
    fn find_interaction(&self, interaction_id: u64) -> Option<InteractionSummary> {
        self.index.read().get(&interaction_id)?.summary()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLogRecord {
    #[serde(flatten)]
    pub record: FeedbackRecord,
    pub effect: FeedbackEffect,
}

pub struct FeedbackLog {
    file: Mutex<File>,
}

impl FeedbackLog {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let (file, _) = open_jsonl::<serde_json::Value>(path.as_ref())?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn append(&self, record: &FeedbackLogRecord) -> std::io::Result<()> {
        append_line(&mut self.file.lock(), record)
    }
}

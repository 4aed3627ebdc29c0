//! Semantic response cache matched by hashed character-trigram cosine
//! similarity, with frequency and age aware eviction.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::Action;
use crate::hash::fnv1a;

pub const EMBED_DIM: usize = 256;
pub const CACHE_FILE_VERSION: u32 = 1;
const HOUR_MS: f64 = 3_600_000.0;
/// Cosines closer than this are treated as equal when choosing an entry.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("response text must not be empty")]
    EmptyResponse,
    #[error("unknown cache entry {0}")]
    UnknownEntry(u64),
    #[error("corrupt cache file: {0}")]
    CorruptCacheFile(String),
    #[error("cache file I/O failed: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("invalid cache configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CacheError>;

/// Lowercase, drop punctuation and symbols, collapse whitespace.
pub fn normalize_query(text: &str) -> String {
    let kept: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maps normalized text to a unit vector, or the zero vector when the text
/// carries nothing to match on.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, normalized: &str) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

/// Character trigrams of `^text$`.
pub fn trigrams(normalized: &str) -> Vec<String> {
    if normalized.is_empty() {
        return Vec::new();
    }
    let padded: Vec<char> = std::iter::once('^')
        .chain(normalized.chars())
        .chain(std::iter::once('$'))
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn trigram_bucket(trigram: &str) -> usize {
    (fnv1a(trigram.as_bytes()) % EMBED_DIM as u64) as usize
}

impl Embedder for TrigramEmbedder {
    fn dim(&self) -> usize {
        EMBED_DIM
    }

    fn embed(&self, normalized: &str) -> Vec<f64> {
        let mut v = vec![0.0; EMBED_DIM];
        for t in trigrams(normalized) {
            v[trigram_bucket(&t)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

pub fn embed(text: &str) -> Vec<f64> {
    TrigramEmbedder.embed(text)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTier {
    Edge,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: u64,
    pub normalized_query: String,
    pub embedding: Vec<f64>,
    pub response_text: String,
    pub action: Option<Action>,
    pub hit_count: u64,
    pub created_at: u64,
    pub last_hit_at: u64,
    pub source_tier: SourceTier,
    pub invalidated: bool,
}

impl CacheEntry {
    /// `hit_count * 2^(-hours since last hit / half_life_h)`
    pub fn priority(&self, now_ms: u64, half_life_h: f64) -> f64 {
        let age_h = now_ms.saturating_sub(self.last_hit_at) as f64 / HOUR_MS;
        self.hit_count as f64 * (-age_h / half_life_h).exp2()
    }

    fn is_expired(&self, now_ms: u64, ttl_ms: u64) -> bool {
        now_ms.saturating_sub(self.last_hit_at) > ttl_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub capacity: usize,
    pub similarity_tau: f64,
    pub ttl_ms: u64,
    pub half_life_h: f64,
    pub merge_threshold: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            capacity: 1_000,
            similarity_tau: 0.85,
            ttl_ms: 7 * 24 * 3_600_000,
            half_life_h: 24.0,
            merge_threshold: 0.98,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(CacheError::InvalidConfig("capacity must be >= 1".into()));
        }
        if !(self.similarity_tau > 0.0 && self.similarity_tau <= 1.0) {
            return Err(CacheError::InvalidConfig("similarity_tau must lie in (0, 1]".into()));
        }
        if !(self.half_life_h > 0.0) {
            return Err(CacheError::InvalidConfig("half_life_h must be > 0".into()));
        }
        if !(self.merge_threshold > 0.0 && self.merge_threshold <= 1.0) {
            return Err(CacheError::InvalidConfig("merge_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub expirations: u64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHit {
    pub entry: CacheEntry,
    pub similarity: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    next_id: u64,
    entries: Vec<CacheEntry>,
    stats: CacheStats,
}

pub struct SemanticCache {
    config: CacheConfig,
    embedder: Box<dyn Embedder>,
    entries: BTreeMap<u64, CacheEntry>,
    next_id: u64,
    stats: CacheStats,
}

impl std::fmt::Debug for SemanticCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemanticCache")
            .field("config", &self.config)
            .field("size", &self.entries.len())
            .field("stats", &self.stats)
            .finish()
    }
}

impl SemanticCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        Self::with_embedder(config, Box::new(TrigramEmbedder))
    }

    pub fn with_embedder(config: CacheConfig, embedder: Box<dyn Embedder>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            embedder,
            entries: BTreeMap::new(),
            next_id: 1,
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            size: self.entries.len(),
            ..self.stats
        }
    }

    pub fn get(&self, id: u64) -> Option<&CacheEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    fn is_live(&self, e: &CacheEntry, now_ms: u64) -> bool {
        !e.invalidated && !e.is_expired(now_ms, self.config.ttl_ms)
    }

    /// Best live entry for an embedding: highest cosine, then most recent
    /// hit, then lowest id.
    fn best_match(&self, embedding: &[f64], now_ms: u64) -> Option<(u64, f64)> {
        if is_zero(embedding) {
            return None;
        }
        let scored: Vec<(&CacheEntry, f64)> = self
            .entries
            .values()
            .filter(|e| self.is_live(e, now_ms) && !is_zero(&e.embedding))
            .map(|e| (e, dot(embedding, &e.embedding)))
            .collect();
        let top = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        scored
            .into_iter()
            .filter(|(_, s)| *s >= top - TIE_EPSILON)
            .min_by(|(a, _), (b, _)| b.last_hit_at.cmp(&a.last_hit_at).then(a.id.cmp(&b.id)))
            .map(|(e, s)| (e.id, s))
    }

    /// Read-only lookup that leaves hit counters and stats alone.
    pub fn peek(&self, query: &str, now_ms: u64) -> Option<CacheHit> {
        let embedding = self.embedder.embed(&normalize_query(query));
        let (id, sim) = self.best_match(&embedding, now_ms)?;
        (sim >= self.config.similarity_tau).then(|| CacheHit {
            entry: self.entries[&id].clone(),
            similarity: sim,
        })
    }

    pub fn lookup(&mut self, query: &str, now_ms: u64) -> Option<CacheHit> {
        match self.peek(query, now_ms) {
            Some(hit) => {
                let e = self.entries.get_mut(&hit.entry.id).expect("entry just matched");
                e.hit_count += 1;
                e.last_hit_at = e.last_hit_at.max(now_ms);
                self.stats.hits += 1;
                Some(CacheHit {
                    entry: e.clone(),
                    similarity: hit.similarity,
                })
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    pub fn insert(
        &mut self,
        query: &str,
        response: &str,
        action: Option<Action>,
        tier: SourceTier,
        now_ms: u64,
    ) -> Result<CacheEntry> {
        if response.is_empty() {
            return Err(CacheError::EmptyResponse);
        }
        let normalized = normalize_query(query);
        let embedding = self.embedder.embed(&normalized);
        if let Some((id, sim)) = self.best_match(&embedding, now_ms) {
            if sim >= self.config.merge_threshold {
                let e = self.entries.get_mut(&id).expect("entry just matched");
                e.response_text = response.to_string();
                e.action = action;
                e.source_tier = tier;
                e.hit_count += 1;
                e.last_hit_at = e.last_hit_at.max(now_ms);
                return Ok(e.clone());
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let entry = CacheEntry {
            id,
            normalized_query: normalized,
            embedding,
            response_text: response.to_string(),
            action,
            hit_count: 1,
            created_at: now_ms,
            last_hit_at: now_ms,
            source_tier: tier,
            invalidated: false,
        };
        self.entries.insert(id, entry.clone());
        if self.entries.len() > self.config.capacity {
            self.evict(now_ms);
        }
        Ok(entry)
    }

    /// Removes lowest-priority entries until the capacity bound holds.
    pub fn evict(&mut self, now_ms: u64) -> Vec<CacheEntry> {
        let mut evicted = Vec::new();
        while self.entries.len() > self.config.capacity {
            let half_life = self.config.half_life_h;
            let victim = self
                .entries
                .values()
                .min_by(|a, b| {
                    a.priority(now_ms, half_life)
                        .total_cmp(&b.priority(now_ms, half_life))
                        .then(a.created_at.cmp(&b.created_at))
                        .then(a.id.cmp(&b.id))
                })
                .map(|e| e.id)
                .expect("non-empty");
            evicted.push(self.entries.remove(&victim).expect("victim exists"));
            self.stats.evictions += 1;
        }
        evicted
    }

    /// Expire, purge invalidated entries, then evict. Returns the counts
    /// this pass produced, with `size` after the pass.
    pub fn maintain(&mut self, now_ms: u64) -> CacheStats {
        let ttl = self.config.ttl_ms;
        let expired: Vec<u64> = self
            .entries
            .values()
            .filter(|e| !e.invalidated && e.is_expired(now_ms, ttl))
            .map(|e| e.id)
            .collect();
        for id in &expired {
            self.entries.remove(id);
        }
        self.stats.expirations += expired.len() as u64;
        self.entries.retain(|_, e| !e.invalidated);
        let evicted = self.evict(now_ms).len() as u64;
        CacheStats {
            hits: 0,
            misses: 0,
            evictions: evicted,
            expirations: expired.len() as u64,
            size: self.entries.len(),
        }
    }

    pub fn invalidate(&mut self, id: u64) -> Result<()> {
        let e = self.entries.get_mut(&id).ok_or(CacheError::UnknownEntry(id))?;
        e.invalidated = true;
        Ok(())
    }

    pub fn remove(&mut self, id: u64) -> Result<CacheEntry> {
        self.entries.remove(&id).ok_or(CacheError::UnknownEntry(id))
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Adds hits to a live entry, as positive feedback does.
    pub fn reinforce(&mut self, id: u64, extra_hits: u64, now_ms: u64) -> Result<()> {
        let e = self
            .entries
            .get_mut(&id)
            .filter(|e| !e.invalidated)
            .ok_or(CacheError::UnknownEntry(id))?;
        e.hit_count += extra_hits;
        e.last_hit_at = e.last_hit_at.max(now_ms);
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = CacheFile {
            version: CACHE_FILE_VERSION,
            next_id: self.next_id,
            entries: self.entries.values().cloned().collect(),
            stats: self.stats(),
        };
        let mut out = serde_json::to_vec_pretty(&file).expect("cache serializes");
        out.push(b'\n');
        out
    }

    /// Writes the whole cache through a temporary file and a rename.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_json())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| CacheError::IoFailure(e.error))?;
        Ok(())
    }

    /// Replaces the contents with the file's. A missing file leaves an empty
    /// cache; a bad file leaves the cache untouched.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.entries.clear();
                self.next_id = 1;
                self.stats = CacheStats::default();
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        self.load_bytes(&bytes)
    }

    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let file: CacheFile =
            serde_json::from_slice(bytes).map_err(|e| CacheError::CorruptCacheFile(e.to_string()))?;
        if file.version != CACHE_FILE_VERSION {
            return Err(CacheError::CorruptCacheFile(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let dim = self.embedder.dim();
        let mut entries = BTreeMap::new();
        for e in file.entries {
            if e.embedding.len() != dim {
                return Err(CacheError::CorruptCacheFile(format!(
                    "entry {} has embedding length {}",
                    e.id,
                    e.embedding.len()
                )));
            }
            if e.id >= file.next_id {
                return Err(CacheError::CorruptCacheFile(format!("entry id {} >= next_id", e.id)));
            }
            if entries.insert(e.id, e).is_some() {
                return Err(CacheError::CorruptCacheFile("duplicate entry id".into()));
            }
        }
        self.entries = entries;
        self.next_id = file.next_id;
        self.stats = file.stats;
        Ok(())
    }
}

//! Gateway configuration: one TOML document, overridable from the
//! environment, validated before anything starts.

use std::path::{Path, PathBuf};

use ia_audio::FrontendConfig;
use ia_core::actions::FeedbackConfig;
use ia_core::context::SensorKind;
use ia_core::controller::{PromptConfig, RoutingConfig};
use ia_core::{AsrEngineSpec, CacheConfig, UserProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    /// A semantically invalid value, with the line it was found on if known.
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        message: String,
        line: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    /// Base URL of an OpenAI-compatible endpoint; empty means offline.
    pub url: String,
    pub api_key: String,
    pub model: String,
    pub timeout_ms: u64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            api_key: String::new(),
            model: "gpt-4o-mini".into(),
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub max_tokens: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self { max_tokens: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: String,
    /// `lamp`, `thermostat` or `switch`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub id: String,
    pub kind: SensorKind,
    pub unit: String,
    pub interval_ms: u64,
    /// Fixed reading, used when no replay file is given.
    #[serde(default)]
    pub constant: Option<f64>,
    /// CSV of `timestamp_ms,value` rows.
    #[serde(default)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub config_version: u32,
    pub listen: String,
    pub data_dir: PathBuf,
    /// Seeds every random or pseudo-random component.
    pub seed: u64,
    /// Directory of plan template JSON files; empty disables templates.
    pub templates_dir: Option<PathBuf>,
    /// JSON file of `{entries: [{fingerprint, text, confidence}]}` for the mock recognizer.
    pub mock_asr: Option<PathBuf>,
    /// Seconds between cache maintenance passes while serving.
    pub maintenance_interval_s: u64,
    pub audio: FrontendConfig,
    pub asr: AsrEngineSpec,
    pub cache: CacheConfig,
    pub routing: RoutingConfig,
    pub prompt: PromptConfig,
    pub cloud: CloudConfig,
    pub edge: EdgeConfig,
    pub feedback: FeedbackConfig,
    pub devices: Vec<DeviceConfig>,
    pub sensors: Vec<SensorConfig>,
    pub profiles: Vec<UserProfile>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            seed: 7,
            templates_dir: None,
            mock_asr: None,
            maintenance_interval_s: 300,
            audio: FrontendConfig::default(),
            asr: AsrEngineSpec::default(),
            cache: CacheConfig::default(),
            routing: RoutingConfig::default(),
            prompt: PromptConfig::default(),
            cloud: CloudConfig::default(),
            edge: EdgeConfig::default(),
            feedback: FeedbackConfig::default(),
            devices: ["lamp", "thermostat", "switch"]
                .map(|k| DeviceConfig {
                    id: k.into(),
                    kind: k.into(),
                })
                .to_vec(),
            sensors: vec![
                SensorConfig {
                    id: "temp1".into(),
                    kind: SensorKind::Temperature,
                    unit: "C".into(),
                    interval_ms: 60_000,
                    constant: Some(21.5),
                    replay: None,
                },
                SensorConfig {
                    id: "hum1".into(),
                    kind: SensorKind::Humidity,
                    unit: "%".into(),
                    interval_ms: 60_000,
                    constant: Some(40.0),
                    replay: None,
                },
            ],
            profiles: Vec::new(),
        }
    }
}

/// Environment variables consulted by [`GatewayConfig::from_env`].
pub const ENV_CONFIG: &str = "IA_CONFIG";
pub const ENV_CLOUD_URL: &str = "IA_CLOUD_URL";
pub const ENV_CLOUD_KEY: &str = "IA_CLOUD_KEY";
pub const ENV_CLOUD_MODEL: &str = "IA_CLOUD_MODEL";
pub const ENV_DATA_DIR: &str = "IA_DATA_DIR";

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: GatewayConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(|e| locate(e, text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reads the file named by `explicit` or `IA_CONFIG` (defaults if
    /// neither), then applies the other `IA_*` overrides.
    pub fn from_env(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        Self::from_lookup(explicit, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(
        explicit: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let path = explicit.map(Path::to_path_buf).or_else(|| env(ENV_CONFIG).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => Self::load(&p)?,
            None => Self::default(),
        };
        if let Some(v) = env(ENV_CLOUD_URL) {
            cfg.cloud.url = v;
        }
        if let Some(v) = env(ENV_CLOUD_KEY) {
            cfg.cloud.api_key = v;
        }
        if let Some(v) = env(ENV_CLOUD_MODEL) {
            cfg.cloud.model = v;
        }
        if let Some(v) = env(ENV_DATA_DIR) {
            cfg.data_dir = PathBuf::from(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            field: field.into(),
            message,
            line: None,
        };
        if self.config_version != CONFIG_VERSION {
            return Err(invalid(
                "config_version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.config_version),
            ));
        }
        if self.listen.parse::<std::net::SocketAddr>().is_err() {
            return Err(invalid("listen", format!("{:?} is not a socket address", self.listen)));
        }
        self.audio
            .validate()
            .map_err(|e| invalid("audio", e.to_string()))?;
        if self.audio.sample_rate_hz != 16_000 {
            return Err(invalid("audio.sample_rate_hz", "only 16000 is supported".into()));
        }
        self.asr.validate().map_err(|e| invalid("asr", e.to_string()))?;
        self.cache.validate().map_err(|e| invalid("cache", e.to_string()))?;
        let tau = self.routing.similarity_tau;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(invalid("routing.similarity_tau", format!("{tau} is outside (0, 1]")));
        }
        if self.prompt.token_budget == 0 {
            return Err(invalid("prompt.token_budget", "must be > 0".into()));
        }
        if !self.cloud.url.is_empty() && !(self.cloud.url.starts_with("http://") || self.cloud.url.starts_with("https://")) {
            return Err(invalid("cloud.url", format!("{:?} is not an http(s) URL", self.cloud.url)));
        }
        if self.cloud.timeout_ms == 0 {
            return Err(invalid("cloud.timeout_ms", "must be > 0".into()));
        }
        if self.edge.max_tokens == 0 {
            return Err(invalid("edge.max_tokens", "must be > 0".into()));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if ia_core::actions::MockDevice::by_kind(&d.kind).is_none() {
                return Err(invalid(&format!("devices[{i}].kind"), format!("unknown device kind {:?}", d.kind)));
            }
            if self.devices[..i].iter().any(|o| o.id == d.id) {
                return Err(invalid(&format!("devices[{i}].id"), format!("duplicate device id {:?}", d.id)));
            }
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if s.interval_ms == 0 {
                return Err(invalid(&format!("sensors[{i}].interval_ms"), "must be > 0".into()));
            }
            if s.constant.is_none() && s.replay.is_none() {
                return Err(invalid(&format!("sensors[{i}]"), "needs either constant or replay".into()));
            }
            if self.sensors[..i].iter().any(|o| o.id == s.id) {
                return Err(invalid(&format!("sensors[{i}].id"), format!("duplicate sensor id {:?}", s.id)));
            }
        }
        Ok(())
    }
}

/// Attaches the 1-based line of the offending key when it can be found.
fn locate(err: ConfigError, text: &str) -> ConfigError {
    let ConfigError::Invalid { field, message, .. } = err else {
        return err;
    };
    let mut parts: Vec<&str> = field.split('.').collect();
    let key = parts.pop().unwrap_or_default();
    let key = key.split('[').next().unwrap_or(key);
    let table = parts.join(".");
    let mut current = String::new();
    let mut line = None;
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if let Some(header) = l.strip_prefix('[') {
            current = header.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == table && key.is_empty() {
                line = Some(i + 1);
                break;
            }
            continue;
        }
        let matches_key = l
            .split_once('=')
            .is_some_and(|(k, _)| k.trim() == key);
        if matches_key && current == table {
            line = Some(i + 1);
            break;
        }
        if current == key && table.is_empty() {
            line = Some(i + 1);
            break;
        }
    }
    ConfigError::Invalid { field, message, line }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        GatewayConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_value_reports_its_line() {
        let text = "config_version = 1\n\n[cache]\ncapacity = 10\n\n[routing]\nsimilarity_tau = 1.5\n";
        let err = GatewayConfig::from_toml(text).unwrap_err();
        assert_eq!(err.to_string(), "line 7: routing.similarity_tau: 1.5 is outside (0, 1]");
    }

    #[test]
    fn unknown_field_is_a_parse_error_with_position() {
        let err = GatewayConfig::from_toml("config_version = 1\nlisten_port = 80\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("listen_port"), "{msg}");
    }

    #[test]
    fn wrong_version_rejected() {
        let err = GatewayConfig::from_toml("config_version = 2\n").unwrap_err();
        assert_eq!(err.to_string(), "line 1: config_version: unsupported version 2, expected 1");
    }

    #[test]
    fn environment_overrides_file_values() {
        let cfg = GatewayConfig::from_lookup(None, |k| match k {
            ENV_CLOUD_URL => Some("http://127.0.0.1:9999/v1".into()),
            ENV_CLOUD_MODEL => Some("local-model".into()),
            ENV_DATA_DIR => Some("/tmp/ia".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.cloud.url, "http://127.0.0.1:9999/v1");
        assert_eq!(cfg.cloud.model, "local-model");
        assert_eq!(cfg.data_dir, PathBuf::from("/tmp/ia"));
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg = GatewayConfig::from_toml("config_version = 1\n[cache]\ncapacity = 5\n").unwrap();
        assert_eq!(cfg.cache.capacity, 5);
        assert_eq!(cfg.cache.similarity_tau, 0.85);
        assert_eq!(cfg.devices.len(), 3);
    }
}

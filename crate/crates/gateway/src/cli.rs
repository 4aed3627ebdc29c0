//! Command-line entry point. Exit codes: 0 success, 1 user error,
//! 2 internal error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use ia_audio::{Frontend, StageSet};
use ia_core::asr::{fingerprint_utterance, MockRegistryFile};
use ia_core::{AsrBridge, AsrError, CacheError, MockRegistry, SemanticCache};

use crate::config::GatewayConfig;
use crate::gateway::{Gateway, CACHE_FILE};
use crate::replay::{read_session, replay, write_session};

/// A failure caused by the invocation rather than the program.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UserError(pub String);

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "ia-gateway", version, about = "Edge assistant gateway")]
struct Cli {
    /// TOML configuration file (also read from IA_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Vad,
    Aec,
    Denoise,
    Dereverb,
    All,
}

impl StageArg {
    fn stages(self) -> StageSet {
        match self {
            StageArg::Vad => StageSet::only(ia_audio::Stage::Vad),
            StageArg::Aec => StageSet::only(ia_audio::Stage::Aec),
            StageArg::Denoise => StageSet::only(ia_audio::Stage::Denoise),
            StageArg::Dereverb => StageSet::only(ia_audio::Stage::Dereverb),
            StageArg::All => StageSet::ALL,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP daemon.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run front-end stages over a WAV file and print a segment report.
    ProcessAudio {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: StageArg,
        /// Loudspeaker reference for echo cancellation.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Clean a WAV file and print its transcript.
    Transcribe {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Inspect or edit the persisted semantic cache.
    Cache {
        #[command(subcommand)]
        action: CacheCommand,
    },
    /// Re-run a recorded session and compare the responses.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// Rewrite the session file with the new responses.
        #[arg(long)]
        update: bool,
    },
}

#[derive(Debug, Subcommand)]
enum CacheCommand {
    Ls,
    Clear,
    Rm { id: u64 },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            if e.downcast_ref::<UserError>().is_some() || e.downcast_ref::<crate::config::ConfigError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<GatewayConfig> {
    let mut cfg = GatewayConfig::from_env(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Serve { listen } => serve(cfg, listen, out),
        Command::ProcessAudio {
            input,
            out: output,
            stage,
            reference,
        } => process_audio(&cfg, &input, &output, stage, reference.as_deref(), out),
        Command::Transcribe { input } => transcribe(&cfg, &input, out),
        Command::Cache { action } => cache(&cfg, action, out),
        Command::Replay { session, update } => replay_cmd(&cfg, &session, update, out),
    }
}

fn read_input_wav(path: &Path, cfg: &GatewayConfig) -> anyhow::Result<Vec<f64>> {
    let wav = ia_audio::wav::read_wav(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    if wav.sample_rate_hz != cfg.audio.sample_rate_hz {
        return Err(user(format!(
            "{}: expected {} Hz audio, got {} Hz",
            path.display(),
            cfg.audio.sample_rate_hz,
            wav.sample_rate_hz
        )));
    }
    Ok(wav.samples)
}

fn audio_error(e: ia_audio::AudioError) -> anyhow::Error {
    match e {
        ia_audio::AudioError::EmptySignal | ia_audio::AudioError::FrameMismatch(_) => user(e.to_string()),
        other => other.into(),
    }
}

fn process_audio(
    cfg: &GatewayConfig,
    input: &Path,
    output: &Path,
    stage: StageArg,
    reference: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let samples = read_input_wav(input, cfg)?;
    let reference = reference.map(|p| read_input_wav(p, cfg)).transpose()?;
    let frontend = Frontend::with_stages(cfg.audio.clone(), stage.stages())?;
    let utterance = frontend
        .process(&samples, reference.as_deref())
        .map_err(audio_error)?;
    ia_audio::wav::write_wav(output, &utterance.samples, utterance.sample_rate_hz)
        .with_context(|| format!("writing {}", output.display()))?;
    let segments: Vec<_> = utterance
        .segments
        .iter()
        .map(|s| {
            serde_json::json!({
                "start_sample": s.start_sample,
                "end_sample": s.end_sample,
                "start_ms": cfg.audio.samples_to_ms(s.start_sample),
                "end_ms": cfg.audio.samples_to_ms(s.end_sample),
            })
        })
        .collect();
    let report = serde_json::json!({
        "input": input.display().to_string(),
        "output": output.display().to_string(),
        "stage": format!("{stage:?}").to_lowercase(),
        "sample_rate_hz": utterance.sample_rate_hz,
        "duration_ms": utterance.duration_ms(),
        "speech_ms": cfg.audio.samples_to_ms(utterance.speech_samples()),
        "segments": segments,
        "fingerprint": format!("{:016x}", fingerprint_utterance(&utterance)),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(0)
}

fn transcribe(cfg: &GatewayConfig, input: &Path, out: &mut dyn Write) -> anyhow::Result<i32> {
    let samples = read_input_wav(input, cfg)?;
    let utterance = Frontend::new(cfg.audio.clone())?
        .process(&samples, None)
        .map_err(audio_error)?;
    let mock = Arc::new(MockRegistry::new());
    if let Some(path) = &cfg.mock_asr {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let file: MockRegistryFile = serde_json::from_slice(&bytes).map_err(|e| user(format!("{}: {e}", path.display())))?;
        mock.load_records(&file).map_err(|e| user(format!("{}: {e}", path.display())))?;
    }
    let bridge = AsrBridge::new(cfg.asr.clone(), mock)?;
    match bridge.transcribe(&utterance) {
        Ok(t) => {
            writeln!(out, "{}", serde_json::to_string_pretty(&t)?)?;
            Ok(0)
        }
        Err(e @ AsrError::LowConfidence { .. }) => Err(user(format!(
            "{e} (utterance fingerprint {:016x})",
            fingerprint_utterance(&utterance)
        ))),
        Err(e) => Err(e.into()),
    }
}

fn cache(cfg: &GatewayConfig, action: CacheCommand, out: &mut dyn Write) -> anyhow::Result<i32> {
    let path = cfg.data_dir.join(CACHE_FILE);
    let mut cache = SemanticCache::new(cfg.cache.clone())?;
    cache.load(&path)?;
    match action {
        CacheCommand::Ls => {
            writeln!(out, "{:>6}  {:>6}  {:<6}  {:<13}  {:<32}  RESPONSE", "ID", "HITS", "TIER", "LAST_HIT_MS", "QUERY")?;
            for e in cache.entries() {
                let tier = serde_json::to_value(e.source_tier)?;
                let flag = if e.invalidated { " (invalidated)" } else { "" };
                writeln!(
                    out,
                    "{:>6}  {:>6}  {:<6}  {:<13}  {:<32}  {}{flag}",
                    e.id,
                    e.hit_count,
                    tier.as_str().unwrap_or_default(),
                    e.last_hit_at,
                    clip(&e.normalized_query, 32),
                    clip(&e.response_text, 48),
                )?;
            }
        }
        CacheCommand::Clear => {
            let n = cache.len();
            cache.clear();
            cache.persist(&path)?;
            writeln!(out, "removed {n} entries")?;
        }
        CacheCommand::Rm { id } => {
            cache.remove(id).map_err(|e| match e {
                CacheError::UnknownEntry(_) => user(e.to_string()),
                other => other.into(),
            })?;
            cache.persist(&path)?;
            writeln!(out, "removed entry {id}")?;
        }
    }
    Ok(0)
}

fn clip(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        let mut c: String = s.chars().take(n - 3).collect();
        c.push_str("...");
        c
    }
}

fn replay_cmd(cfg: &GatewayConfig, session: &Path, update: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let events = read_session(session).map_err(|e| user(e.to_string()))?;
    let data = tempfile::tempdir()?;
    let session_dir = session.parent().unwrap_or(Path::new("."));
    let report = replay(&events, cfg, session_dir, data.path())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    if update {
        write_session(session, &report.updated)?;
        return Ok(0);
    }
    if report.identical() {
        Ok(0)
    } else {
        Err(user(format!(
            "replay differs from the recording ({} mismatches, {} unrecorded events)",
            report.mismatches.len(),
            report.unrecorded
        )))
    }
}

fn serve(cfg: GatewayConfig, listen: Option<String>, out: &mut dyn Write) -> anyhow::Result<i32> {
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let addr = listen.unwrap_or_else(|| cfg.listen.clone());
    let maintenance = Duration::from_secs(cfg.maintenance_interval_s.max(1));
    let gateway = Arc::new(Gateway::open(cfg)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let (listener, local) = runtime
        .block_on(crate::http::bind(&addr))
        .map_err(|e| user(format!("cannot listen on {addr}: {e}")))?;
    writeln!(out, "listening on {local}")?;
    out.flush()?;
    tracing::info!(%local, "gateway started");

    let stop = Arc::new(AtomicBool::new(false));
    let maint = {
        let (gw, stop) = (gateway.clone(), stop.clone());
        std::thread::spawn(move || {
            let mut waited = Duration::ZERO;
            while !stop.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(200));
                waited += Duration::from_millis(200);
                if waited >= maintenance {
                    waited = Duration::ZERO;
                    let delta = gw.maintain();
                    tracing::debug!(?delta, "cache maintenance");
                }
            }
        })
    };
    runtime.block_on(crate::http::serve(gateway.clone(), listener, shutdown_signal()))?;
    stop.store(true, Ordering::SeqCst);
    let _ = maint.join();
    gateway.flush()?;
    tracing::info!("gateway stopped");
    Ok(0)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use ia_core::asr::{MockRegistryFile, MockRegistryRecord};
use serde_json::Value;

fn gateway(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ia-gateway"))
        .args(args)
        .env_remove("IA_CONFIG")
        .env_remove("IA_CLOUD_URL")
        .env("IA_DATA_DIR", data_dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn process_audio_on_silence_reports_no_segments() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("silence.wav");
    let output = dir.path().join("out.wav");
    ia_audio::wav::write_wav(&input, &vec![0.0; 16_000], 16_000).unwrap();
    let o = gateway(
        dir.path(),
        &["process-audio", "--in", input.to_str().unwrap(), "--out", output.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["segments"].as_array().unwrap().len(), 0);
    assert_eq!(report["duration_ms"], 1000);
    let wav = ia_audio::wav::read_wav(&output).unwrap();
    assert_eq!(wav.samples.len(), 16_000);
    assert!(wav.samples.iter().all(|&s| s == 0.0));
}

#[test]
fn process_audio_single_stage_finds_speech() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cmd.wav");
    let output = dir.path().join("out.wav");
    ia_audio::wav::write_wav(&input, &spoken_command(), 16_000).unwrap();
    let o = gateway(
        dir.path(),
        &["process-audio", "--in", input.to_str().unwrap(), "--out", output.to_str().unwrap(), "--stage", "vad"],
    );
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["stage"], "vad");
    assert!(!report["segments"].as_array().unwrap().is_empty());
}

#[test]
fn cache_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = gateway(dir.path(), &["cache", "ls"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("    ID"));

    let o = gateway(dir.path(), &["cache", "rm", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(gateway(dir.path(), &["cache", "clear"]).status.code(), Some(0));

    // seed one entry directly on disk
    let mut cache = ia_core::SemanticCache::new(Default::default()).unwrap();
    cache
        .insert("turn on the lamp", "The lamp is on.", None, ia_core::SourceTier::Cloud, 1_000)
        .unwrap();
    cache.persist(&dir.path().join("cache.json")).unwrap();
    let listing = stdout(&gateway(dir.path(), &["cache", "ls"]));
    assert_eq!(listing.lines().count(), 2);
    assert!(listing.contains("turn on the lamp"));
    assert_eq!(gateway(dir.path(), &["cache", "rm", "1"]).status.code(), Some(0));
    assert_eq!(stdout(&gateway(dir.path(), &["cache", "ls"])).lines().count(), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gateway(dir.path(), &["cache", "ls", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(gateway(dir.path(), &["frobnicate"]).status.code(), Some(1));
    let missing = gateway(dir.path(), &["process-audio", "--in", "/nonexistent.wav", "--out", "/tmp/x.wav"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(gateway(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_one_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gw.toml");
    std::fs::write(&cfg, "config_version = 1\n[cache]\ncapacity = 0\n").unwrap();
    let o = gateway(dir.path(), &["--config", cfg.to_str().unwrap(), "cache", "ls"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3: cache"), "{err}");
}

#[test]
fn transcribe_uses_the_mock_registry() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cmd.wav");
    ia_audio::wav::write_wav(&input, &spoken_command(), 16_000).unwrap();

    let unknown = gateway(dir.path(), &["transcribe", "--in", input.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(1));

    let fp = gateway_fingerprint(&spoken_command(), &Default::default());
    let registry = dir.path().join("mock_asr.json");
    let file = MockRegistryFile {
        entries: vec![MockRegistryRecord {
            fingerprint: format!("{fp:016x}"),
            text: "turn on the lamp".into(),
            confidence: 0.9,
        }],
    };
    std::fs::write(&registry, serde_json::to_vec(&file).unwrap()).unwrap();
    let cfg = dir.path().join("gw.toml");
    std::fs::write(&cfg, format!("config_version = 1\nmock_asr = {:?}\n", registry.to_str().unwrap())).unwrap();
    let o = gateway(dir.path(), &["--config", cfg.to_str().unwrap(), "transcribe", "--in", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(t["text"], "turn on the lamp");
}

#[test]
fn replay_detects_a_tampered_recording() {
    let dir = tempfile::tempdir().unwrap();
    let original = std::fs::read_to_string(fixtures_dir().join("session_5.jsonl")).unwrap();
    let tampered = original.replacen("Good night Ada.", "Good night Bob.", 1);
    assert_ne!(tampered, original);
    let copy_dir = fixtures_dir();
    let path = copy_dir.join(format!("tampered_{}.jsonl", std::process::id()));
    std::fs::write(&path, tampered).unwrap();
    let o = gateway(dir.path(), &["replay", "--session", path.to_str().unwrap()]);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["mismatches"].as_array().unwrap().len(), 1);
}

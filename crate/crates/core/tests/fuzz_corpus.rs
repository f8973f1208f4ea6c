//! Replays the checked-in fuzz corpus through the parsers so the seeds stay
//! valid and the round-trip properties hold on stable toolchains.

use std::fs;
use std::path::PathBuf;

use edgecache::sac::checkpoint::{from_json, to_json};
use edgecache::{ExperimentConfig, RequestTrace, ShiftSchedule};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect()
}

#[test]
fn trace_seeds_round_trip() {
    for (path, text) in seeds("trace_parse") {
        let trace = RequestTrace::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RequestTrace::parse(&trace.to_text()).unwrap(), trace);
    }
}

#[test]
fn schedule_seeds_round_trip() {
    for (path, text) in seeds("schedule_parse") {
        if path.file_name().unwrap().to_string_lossy().starts_with("reject_") {
            let err = ShiftSchedule::parse(&text).unwrap_err().to_string();
            assert!(err.starts_with("line 2:"), "{}: {err}", path.display());
            continue;
        }
        let schedule = ShiftSchedule::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(ShiftSchedule::parse(&schedule.to_text()).unwrap(), schedule);
    }
}

#[test]
fn config_seeds_round_trip() {
    for (path, text) in seeds("config_parse") {
        let config = ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(ExperimentConfig::parse(&config.to_text()).unwrap().to_text(), config.to_text());
    }
}

#[test]
fn checkpoint_seeds_round_trip() {
    for (path, text) in seeds("checkpoint_parse") {
        let ckpt = from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = from_json(&to_json(&ckpt.params, &ckpt.config_hash).unwrap()).unwrap();
        assert_eq!(again.params, ckpt.params);
    }
}

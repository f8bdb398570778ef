#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn decprov<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_decprov")).args(args).env_remove("DECPROV_LOG").output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Simulates the bundled scenario into `dir` and returns the log path and
/// the printed summary.
pub fn simulate(dir: &Path, extra: &[&str]) -> (PathBuf, Value) {
    let log = dir.join("scenario.jsonl");
    let mut args = vec!["simulate", "--out", log.to_str().unwrap()];
    args.extend_from_slice(extra);
    let summary = json(&decprov(&args));
    (log, summary)
}

pub fn landmark(summary: &Value, key: &str) -> String {
    summary["landmarks"][key].as_str().unwrap_or_else(|| summary["landmarks"][key][0].as_str().unwrap()).to_owned()
}

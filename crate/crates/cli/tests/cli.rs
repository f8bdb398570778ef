mod common;

use std::io::Write;

use common::{code, decprov, json, landmark, simulate, stdout};
use decprov_core::compliance::BreachReport;
use decprov_core::log::ChainReport;
use decprov_core::query::{ActorRoles, Pipeline};
use decprov_core::records::{Art30Record, AuditReport};
use decprov_sim::{Findings, Landmarks};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn round_trips<T: DeserializeOwned + Serialize>(value: &Value) {
    let typed: T = serde_json::from_value(value.clone()).expect("matches the schema");
    assert_eq!(&serde_json::to_value(&typed).unwrap(), value);
}

#[test]
fn json_outputs_round_trip_through_their_types() {
    let dir = tempfile::tempdir().unwrap();
    let (log, summary) = simulate(dir.path(), &[]);
    let log = log.to_str().unwrap();
    round_trips::<Landmarks>(&summary["landmarks"]);
    let redirect = landmark(&summary, "ambulance");
    let release = landmark(&summary, "defective_updates");

    round_trips::<ChainReport>(&json(&decprov(["verify", "--log", log, "--format", "json"])));
    round_trips::<Pipeline>(&json(&decprov(["trace", "--log", log, "--id", &redirect])));
    round_trips::<Pipeline>(&json(&decprov(["trace", "--log", log, "--id", &release, "--direction", "forward"])));
    round_trips::<Vec<ActorRoles>>(&json(&decprov(["actors", "--log", log, "--id", &redirect])));
    for audience in ["regulator", "developer", "user"] {
        round_trips::<AuditReport>(&json(&decprov([
            "report",
            "--log",
            log,
            "--id",
            &redirect,
            "--audience",
            audience,
        ])));
    }
    round_trips::<Art30Record>(&json(&decprov(["art30", "--log", log, "--controller", "CarNet"])));
    round_trips::<Vec<Art30Record>>(&json(&decprov(["art30", "--log", log])));

    let flows = json(&decprov(["flows", "--log", log, "--boundary", "administrative"]));
    let flows = flows.as_array().unwrap();
    assert!(!flows.is_empty());
    for f in flows {
        assert_eq!(f["boundary"], "administrative");
        for key in ["id", "timestamp", "entity", "category", "from", "to"] {
            assert!(f.get(key).is_some(), "{key}");
        }
    }

    // commands that append to the log come last
    round_trips::<Findings>(&json(&decprov(["investigate", "--log", log, "--thread", "lighting"])));
    round_trips::<Vec<Findings>>(&json(&decprov(["investigate", "--log", log])));
    round_trips::<BreachReport>(&json(&decprov(["audit", "--log", log, "--breach", &release])));
    assert_eq!(stdout(&decprov(["verify", "--log", log])), "ok\n");
}

#[test]
fn trace_reports_three_immediate_sources_for_the_redirect() {
    let dir = tempfile::tempdir().unwrap();
    let (log, summary) = simulate(dir.path(), &["--seed", "1"]);
    let redirect = landmark(&summary, "ambulance");
    let p = json(&decprov([
        "trace",
        "--log",
        log.to_str().unwrap(),
        "--id",
        &redirect,
        "--direction",
        "back",
        "--format",
        "json",
    ]));
    assert_eq!(p["immediate"].as_array().unwrap().len(), 3);
    let dot = stdout(&decprov(["trace", "--log", log.to_str().unwrap(), "--id", &redirect, "--format", "dot"]));
    assert!(dot.starts_with("digraph"));
}

#[test]
fn simulate_twice_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (la, _) = simulate(a.path(), &["--seed", "3", "--trace", a.path().join("t").to_str().unwrap()]);
    let (lb, _) = simulate(b.path(), &["--seed", "3", "--trace", b.path().join("t").to_str().unwrap()]);
    assert_eq!(std::fs::read(la).unwrap(), std::fs::read(lb).unwrap());
    assert_eq!(std::fs::read(a.path().join("t")).unwrap(), std::fs::read(b.path().join("t")).unwrap());
}

#[test]
fn log_path_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (log, _) = simulate(dir.path(), &["--no-faults"]);
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_decprov"))
        .arg("verify")
        .env("DECPROV_LOG", &log)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "ok\n");
}

#[test]
fn ingest_gates_events_through_the_policy() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("ingested.jsonl");
    let policy = dir.path().join("policy.json");
    std::fs::write(
        &policy,
        r#"{"default_action":"record_full","rules":[
            {"match":{"kind":"entity","attrs":{"category":"camera_frame"}},"action":"redact"},
            {"match":{"kind":"entity","attrs":{"category":"debug"}},"action":"drop"}]}"#,
    )
    .unwrap();
    let rules = dir.path().join("rules.json");
    std::fs::write(&rules, r#"{"rules":[{"id":"no-frames-out","trigger":{"category":"camera_frame","boundary":"administrative"},"reaction":{"type":"block"}}]}"#).unwrap();
    let input = dir.path().join("events.jsonl");
    let mut f = std::fs::File::create(&input).unwrap();
    for line in [
        r#"{"kind":"agent","timestamp":"2024-05-18T18:00:00Z","attrs":{"name":"CarNet","label":"CarNet"}}"#,
        r#"{"kind":"agent","timestamp":"2024-05-18T18:00:00Z","attrs":{"name":"CloudVision","label":"CloudVision"}}"#,
        r#"{"kind":"entity","timestamp":"2024-05-18T18:00:01Z","attrs":{"label":"frame-1","category":"camera_frame","image":{"value":"SECRET-FACE","pd":true}}}"#,
        r#"{"kind":"entity","timestamp":"2024-05-18T18:00:01Z","attrs":{"label":"noise","category":"debug"}}"#,
        r#"{"kind":"activity","timestamp":"2024-05-18T18:00:02Z","attrs":{"label":"detect-1"}}"#,
        r#"{"kind":"relation","rel":"used","src":"detect-1","dst":"frame-1","timestamp":"2024-05-18T18:00:02Z"}"#,
        r#"{"kind":"flow","entity":"frame-1","from_agent":"CarNet","to_agent":"CloudVision","boundary":"administrative","timestamp":"2024-05-18T18:00:03Z"}"#,
    ] {
        writeln!(f, "{line}").unwrap();
    }
    drop(f);
    let args = ["ingest", "--log", log.to_str().unwrap(), "--input", input.to_str().unwrap()];
    let summary = json(&decprov(args.iter().copied().chain([
        "--policy",
        policy.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
    ])));
    assert_eq!(summary["dropped"], 1);
    assert_eq!(summary["appended"].as_array().unwrap().len(), 6);
    assert_eq!(summary["actions"]["redact"], 1);
    assert_eq!(summary["decisions"][0]["rule"], "no-frames-out");
    let bytes = std::fs::read_to_string(&log).unwrap();
    assert!(!bytes.contains("SECRET-FACE"));
    assert_eq!(stdout(&decprov(["verify", "--log", log.to_str().unwrap()])), "ok\n");

    // a second ingest appends to the same chain
    let again = dir.path().join("more.jsonl");
    std::fs::write(
        &again,
        r#"{"kind":"entity","timestamp":"2024-05-18T18:00:04Z","attrs":{"label":"frame-2","category":"camera_frame"}}"#,
    )
    .unwrap();
    json(&decprov(["ingest", "--log", log.to_str().unwrap(), "--input", again.to_str().unwrap()]));
    assert_eq!(stdout(&decprov(["verify", "--log", log.to_str().unwrap()])), "ok\n");
    let p = json(&decprov(["trace", "--log", log.to_str().unwrap(), "--id", "frame-1", "--direction", "forward"]));
    assert!(p["nodes"].as_array().unwrap().len() >= 2);
}

#[test]
fn expire_writes_a_compacted_copy() {
    let dir = tempfile::tempdir().unwrap();
    let (log, _) = simulate(dir.path(), &["--no-faults"]);
    let before = std::fs::read(&log).unwrap();
    let out = dir.path().join("compacted.jsonl");
    let policy = dir.path().join("retention.json");
    std::fs::write(&policy, decprov_sim::REDACTION_POLICY).unwrap();
    let summary = json(&decprov([
        "expire",
        "--log",
        log.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--now",
        "2024-07-01T00:00:00Z",
        "--out",
        out.to_str().unwrap(),
    ]));
    let tombstoned = summary["tombstoned"].as_array().unwrap();
    assert!(!tombstoned.is_empty());
    assert_eq!(std::fs::read(&log).unwrap(), before);
    assert_eq!(stdout(&decprov(["verify", "--log", out.to_str().unwrap()])), "ok\n");
    assert_eq!(summary["records"].as_u64().unwrap() as usize, before.iter().filter(|&&b| b == b'\n').count());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (log, summary) = simulate(dir.path(), &["--no-faults"]);
    let log = log.to_str().unwrap();
    let redirect = landmark(&summary, "ambulance");

    let tampered = dir.path().join("tampered.jsonl");
    let mut bytes = std::fs::read(log).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&tampered, bytes).unwrap();
    let tampered = tampered.to_str().unwrap();

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let empty = empty.to_str().unwrap();

    let bad_input = dir.path().join("bad.jsonl");
    std::fs::write(&bad_input, "{\"kind\":\"entity\"}\n").unwrap();
    let dangling = dir.path().join("dangling.jsonl");
    std::fs::write(
        &dangling,
        r#"{"kind":"relation","rel":"used","src":"a","dst":"b","timestamp":"2024-05-18T18:00:00Z"}"#,
    )
    .unwrap();
    let fresh = dir.path().join("fresh.jsonl");
    let fresh = fresh.to_str().unwrap();

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["--help"], 0),
        (vec!["verify", "--log", log], 0),
        (vec!["trace", "--log", log, "--id", &redirect, "--format", "text"], 0),
        (vec![], 2),
        (vec!["frobnicate"], 2),
        (vec!["trace", "--log", log], 2),
        (vec!["trace", "--log", log, "--id", &redirect, "--bogus"], 2),
        (vec!["trace", "--log", log, "--id", &redirect, "--direction", "sideways"], 2),
        (vec!["trace", "--log", log, "--id", &redirect, "--window", "yesterday"], 2),
        (vec!["trace", "--log", log, "--id", &redirect, "--window", "2024-05-18T19:00:00Z..2024-05-18T18:00:00Z"], 2),
        (vec!["trace", "-l", log, "--id", &redirect], 2),
        (vec!["verify", "--log", log, "--format", "dot"], 2),
        (vec!["verify", "--log", "/nonexistent/log.jsonl"], 2),
        (vec!["report", "--log", log, "--id", &redirect, "--audience", "press"], 2),
        (vec!["report", "--log", log, "--id", &redirect, "--cap", "0"], 2),
        (vec!["investigate", "--log", log, "--thread", "weather"], 2),
        (vec!["audit", "--log", log], 2),
        (vec!["expire", "--log", log, "--policy", log, "--out", log], 2),
        (vec!["trace", "--log", log, "--id", "no-such-node"], 1),
        (vec!["trace", "--log", log, "--id", "n9999999999"], 1),
        (vec!["verify", "--log", tampered], 1),
        (vec!["trace", "--log", tampered, "--id", &redirect], 1),
        (vec!["investigate", "--log", empty], 1),
        (vec!["art30", "--log", empty], 1),
        (vec!["art30", "--log", log, "--controller", "Nobody"], 1),
        (vec!["audit", "--log", log, "--rules", log], 1),
        (vec!["ingest", "--log", fresh, "--input", bad_input.to_str().unwrap()], 1),
        (vec!["ingest", "--log", fresh, "--input", dangling.to_str().unwrap()], 1),
    ];
    for (args, expected) in cases {
        let out = decprov(&args);
        assert_eq!(code(&out), expected, "{args:?}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
        if expected != 0 {
            assert!(!out.stderr.is_empty(), "{args:?} printed no diagnostic");
        }
    }
}

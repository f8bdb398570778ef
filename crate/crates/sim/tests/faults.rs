mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{clean, closure, run};
use decprov_core::{NodeId, ProvGraph, ProvNode};
use decprov_sim::{
    bundled_spec, inject, remove, FaultInjection, FaultKind, FaultWindow, ScenarioSpec, SimError, FAULT_ATTR,
};

fn fault(kind: FaultKind, target: &str, start_s: i64, end_s: i64) -> FaultInjection {
    FaultInjection { kind, target: target.into(), window: FaultWindow { start_s, end_s } }
}

fn bias() -> FaultInjection {
    fault(FaultKind::SensorBias { offset: -0.5 }, "car-2/telemetry", 600, 1800)
}

#[test]
fn inject_then_remove_restores_the_spec() {
    let base = clean(&bundled_spec());
    for f in bundled_spec().faults.into_iter().chain([bias()]) {
        let with = inject(&base, f.clone()).unwrap();
        assert_eq!(with.faults.len(), 1);
        assert_eq!(remove(&with, &f), base);
    }
}

#[test]
fn windows_must_sit_inside_the_horizon() {
    let base = clean(&bundled_spec());
    for (start, end) in [(-1, 100), (0, 3601), (500, 400)] {
        let f = fault(FaultKind::SensorBias { offset: 0.1 }, "car-0/camera", start, end);
        let err = inject(&base, f).unwrap_err();
        assert!(matches!(err, SimError::WindowOutOfRange { .. }), "{err}");
    }
    assert!(inject(&base, fault(FaultKind::SensorBias { offset: 0.1 }, "car-0/camera", 0, 3600)).is_ok());
}

#[test]
fn fault_must_fit_its_target() {
    let base = clean(&bundled_spec());
    let unknown = fault(FaultKind::SensorBias { offset: 0.1 }, "car-9/camera", 0, 10);
    assert!(matches!(inject(&base, unknown), Err(SimError::InvalidSpec(_))));
    let mismatched = fault(FaultKind::ModelStale { staleness_s: 10 }, "CarNet/fleet-density", 0, 10);
    assert!(matches!(inject(&base, mismatched), Err(SimError::InvalidSpec(_))));
}

#[test]
fn congestion_reports_in_the_bad_window_are_corrupted() {
    let spec = bundled_spec();
    let window = spec.faults.iter().find(|f| matches!(f.kind, FaultKind::ServiceBadUpdate { .. })).unwrap().window;
    let g = run(&spec).log.snapshot();
    let reports: Vec<_> = g.nodes().filter(|n| n.attr_str("category") == Some("congestion_report")).collect();
    assert!(!reports.is_empty());
    let mut inside = 0;
    for r in reports {
        let t = r.timestamp.since(spec.start) / 1000;
        let corrupted = r.attr_bool("corrupted") == Some(true);
        let density = r.attr("pedestrian_density").and_then(|v| v.as_f64()).unwrap();
        if t >= window.start_s && t < window.end_s {
            inside += 1;
            assert!(corrupted, "{}", r.display_name());
            assert_eq!(density, 0.0);
        } else {
            assert!(!corrupted, "{}", r.display_name());
            assert!(density > 0.3);
        }
    }
    assert_eq!(inside, 7);
    // the rollback is logged and points at the release it replaces
    let rollback = g.nodes().find(|n| n.attr("rolls_back").is_some()).expect("rollback");
    assert_eq!(rollback.timestamp.since(spec.start) / 1000, window.end_s);
}

#[test]
fn skipped_process_leaves_the_summary_unadjusted() {
    let spec = bundled_spec();
    let g = run(&spec).log.snapshot();
    let adjustments = g.nodes().filter(|n| n.attr_str("component") == Some("event-adjustment"));
    for n in adjustments {
        assert_ne!(n.kind, decprov_core::NodeKind::Activity, "{}", n.display_name());
        assert_eq!(n.attr_bool("gap"), Some(true));
    }
    let summary = g.resolve("EmerSolutions/historic-summary@2995s:historic_summary").unwrap();
    assert_eq!(g.get_node(&summary).unwrap().attr_bool("event_adjusted"), Some(false));

    let cg = run(&clean(&spec)).log.snapshot();
    assert!(cg.resolve("EmerSolutions/event-adjustment@1800s").is_ok());
    let summary = cg.resolve("EmerSolutions/historic-summary@2995s:historic_summary").unwrap();
    assert_eq!(cg.get_node(&summary).unwrap().attr_bool("event_adjusted"), Some(true));
}

#[test]
fn sensor_bias_offsets_readings_in_the_window() {
    let spec = inject(&clean(&bundled_spec()), bias()).unwrap();
    let g = run(&spec).log.snapshot();
    let readings: Vec<_> = g
        .nodes()
        .filter(|n| n.attr_str("category") == Some("telemetry") && n.attr_str("agent") == Some("car-2"))
        .collect();
    for r in &readings {
        let t = r.timestamp.since(spec.start) / 1000;
        let biased = r.attr("calibration_offset").is_some();
        assert_eq!(biased, (600..=1800).contains(&t), "{}", r.display_name());
        assert_eq!(r.attr(FAULT_ATTR).is_some(), biased);
    }
}

/// Node content that survives a rerun: kind, label and plain attrs.
fn signature(n: &ProvNode) -> String {
    let attrs: BTreeMap<_, _> = n
        .attrs
        .iter()
        .filter(|(_, v)| v.as_str().is_none_or(|s| NodeId::new(s).is_err()))
        .map(|(k, v)| (k.clone(), v.to_string()))
        .collect();
    format!("{}|{:?}", n.kind.name(), attrs)
}

fn signatures(g: &ProvGraph) -> BTreeSet<String> {
    g.nodes().map(signature).collect()
}

fn assert_local(spec: &ScenarioSpec) {
    let faulty = run(spec).log.snapshot();
    let baseline = signatures(&run(&clean(spec)).log.snapshot());
    let mut explained = BTreeSet::new();
    for n in faulty.nodes().filter(|n| n.attr(FAULT_ATTR).is_some()) {
        explained.extend(closure(&faulty, &n.id, false));
    }
    assert!(!explained.is_empty());
    for n in faulty.nodes() {
        if !baseline.contains(&signature(n)) {
            assert!(explained.contains(&n.id), "{} changed without a tagged ancestor", n.display_name());
        }
    }
}

#[test]
fn model_stale_changes_only_its_descendants() {
    let f = bundled_spec().faults.into_iter().find(|f| matches!(f.kind, FaultKind::ModelStale { .. })).unwrap();
    assert_local(&inject(&clean(&bundled_spec()), f).unwrap());
}

#[test]
fn process_skipped_changes_only_its_descendants() {
    let f = bundled_spec().faults.into_iter().find(|f| matches!(f.kind, FaultKind::ProcessSkipped { .. })).unwrap();
    assert_local(&inject(&clean(&bundled_spec()), f).unwrap());
}

#[test]
fn sensor_bias_changes_only_its_descendants() {
    assert_local(&inject(&clean(&bundled_spec()), bias()).unwrap());
}

mod common;

use std::collections::BTreeSet;

use common::{clean, run, tagged_ancestors};
use decprov_core::RelKind;
use decprov_sim::{bundled_spec, investigate, thread_root, CauseKind, SimError, Thread};

#[test]
fn bundled_run_reproduces_the_three_lines_of_inquiry() {
    let mut out = run(&bundled_spec());

    let driver = investigate(&mut out.log, "driver").unwrap();
    let kinds: BTreeSet<_> = driver.causes.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, BTreeSet::from([CauseKind::StaleModel, CauseKind::UpdateProcess]));
    assert!(driver.responsible.contains(&"CarNet".to_owned()));
    assert!(driver.responsible.contains(&"CloudVision".to_owned()));
    let process = driver.causes.iter().find(|c| c.kind == CauseKind::UpdateProcess).unwrap();
    assert!(process.detail.contains("manual"));

    let lighting = investigate(&mut out.log, "lighting").unwrap();
    assert_eq!(lighting.outcome, "dim");
    assert_eq!(lighting.causes.len(), 1);
    assert_eq!(lighting.causes[0].kind, CauseKind::DefectiveUpdate);
    assert_eq!(lighting.responsible, ["CloudMap"]);

    let ambulance = investigate(&mut out.log, "ambulance").unwrap();
    assert_eq!(ambulance.outcome, "redirect");
    let kinds: BTreeSet<_> = ambulance.causes.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, BTreeSet::from([CauseKind::DefectiveUpdate, CauseKind::ProcessGap]));
    assert_eq!(ambulance.causes[0].node, lighting.causes[0].node);
}

#[test]
fn findings_match_a_scan_for_tagged_ancestors() {
    let mut spec = bundled_spec();
    for seed in 1..=20 {
        spec.seed = seed;
        let mut out = run(&spec);
        let g = out.log.snapshot();
        for (thread, expected) in [("driver", 2), ("lighting", 1), ("ambulance", 2)] {
            let root = thread_root(&g, thread.parse().unwrap()).unwrap();
            let oracle = tagged_ancestors(&g, &root);
            let findings = investigate(&mut out.log, thread).unwrap();
            assert_eq!(findings.root, root);
            assert_eq!(findings.cause_ids(), oracle, "seed {seed} {thread}");
            assert_eq!(oracle.len(), expected, "seed {seed} {thread}");
        }
    }
}

#[test]
fn fault_free_run_has_nothing_to_find() {
    let mut out = run(&clean(&bundled_spec()));
    for thread in Thread::ALL {
        let f = investigate(&mut out.log, thread.name()).unwrap();
        assert!(f.causes.is_empty(), "{thread}: {:?}", f.causes);
    }
    let g = out.log.snapshot();
    let braking = thread_root(&g, Thread::Driver).unwrap();
    assert_eq!(g.get_node(&braking).unwrap().attr_str("action"), Some("emergency_brake"));
}

#[test]
fn investigation_is_recorded_in_the_log() {
    let mut out = run(&bundled_spec());
    let before = out.log.len();
    let f = investigate(&mut out.log, "ambulance").unwrap();
    assert!(out.log.len() > before);
    let g = out.log.snapshot();
    let used: BTreeSet<_> =
        g.relations_from(&f.investigation).filter(|r| r.rel == RelKind::Used).map(|r| r.dst.clone()).collect();
    assert!(!used.is_empty());
    assert!(used.iter().all(|id| g.contains(id)));
}

#[test]
fn unknown_thread_is_rejected() {
    let mut out = run(&bundled_spec());
    assert!(matches!(investigate(&mut out.log, "weather"), Err(SimError::UnknownThread(_))));
}

//! A deterministic smart-city simulator that produces decision provenance
//! logs.
//!
//! A [`ScenarioSpec`] names the organisations and devices involved, the
//! components they run and when, and how data moves between them. Running
//! it yields a hash-chained log in which every record has passed the
//! capture policy and every flow the compliance rules. Faults (a stale
//! on-vehicle model, a defective service release, a skipped process, a
//! biased sensor) can be injected to recreate an incident chain, and
//! [`investigate`] follows the three lines of inquiry back through the log.
//!
//! ```
//! use decprov_sim::{bundled_policy, bundled_rules, bundled_spec, investigate, run_scenario};
//!
//! let spec = bundled_spec();
//! let mut out = run_scenario(&spec, &bundled_policy(), Some(&bundled_rules())).unwrap();
//! let findings = investigate(&mut out.log, "lighting").unwrap();
//! assert_eq!(findings.outcome, "dim");
//! assert_eq!(findings.causes.len(), 1);
//! ```

pub mod engine;
pub mod error;
pub mod investigate;
pub mod spec;

use decprov_core::capture::CapturePolicy;
use decprov_core::compliance::RuleSet;

pub use engine::{run_scenario, EventKind, EventTrace, RunOutput, SimEvent, FAULT_ATTR};
pub use error::{Result, SimError};
pub use investigate::{
    find_causes, investigate, landmarks, thread_root, Cause, CauseKind, Findings, Landmarks, Thread,
};
pub use spec::{inject, remove, Behavior, FaultInjection, FaultKind, FaultWindow, ScenarioSpec};

/// The smart-city incident scenario.
pub const SMART_CITY: &str = include_str!("../data/smart-city.json");
/// Capture policy redacting personal data from the scenario's sensors.
pub const REDACTION_POLICY: &str = include_str!("../data/redaction-policy.json");
/// Compliance rules and expected flows for the scenario.
pub const RULES: &str = include_str!("../data/rules.json");

pub fn bundled_spec() -> ScenarioSpec {
    ScenarioSpec::from_json(SMART_CITY).expect("bundled scenario is valid")
}

pub fn bundled_policy() -> CapturePolicy {
    CapturePolicy::from_json(REDACTION_POLICY).expect("bundled policy is valid")
}

pub fn bundled_rules() -> RuleSet {
    RuleSet::from_json(RULES).expect("bundled rules are valid")
}

//! Capture policy: the gate between raw system events and the log.
//!
//! A policy is an ordered rule list evaluated first-match-wins, with a
//! default action when nothing matches. Rules decide whether a candidate is
//! stored in full, stored without payload-bearing attributes, stored with
//! personal attributes redacted, or dropped, and how long it is retained.
//!
//! Emitters mark attributes in the raw candidate as
//! `{"value": ..., "pd": true}` (personal data) or
//! `{"value": ..., "payload": true}` (payload-bearing). The tags steer the
//! transformation and are never stored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attrs::{AttrValue, Attrs};
use crate::error::{Error, Result};
use crate::glob::glob_match;
use crate::graph::ProvGraph;
use crate::log::ProvLog;
use crate::model::{Boundary, Draft, NodeId, NodeKind, Payload, ProvNode};
use crate::time::Timestamp;

/// Replacement text for redacted values.
pub const REDACTED: &str = "[REDACTED]";
/// Attr recording which transformation the gate applied.
pub const CAPTURE_ACTION_ATTR: &str = "capture_action";
/// Attr set on tombstoned nodes.
pub const TOMBSTONE_ATTR: &str = "tombstone";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureAction {
    RecordFull,
    RecordMetadataOnly,
    Redact,
    Drop,
}

impl CaptureAction {
    pub fn name(self) -> &'static str {
        match self {
            CaptureAction::RecordFull => "record_full",
            CaptureAction::RecordMetadataOnly => "record_metadata_only",
            CaptureAction::Redact => "redact",
            CaptureAction::Drop => "drop",
        }
    }
}

/// What a rule can be about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Entity,
    Activity,
    Agent,
    Relation,
    Flow,
}

impl From<NodeKind> for SubjectKind {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::Entity => SubjectKind::Entity,
            NodeKind::Activity => SubjectKind::Activity,
            NodeKind::Agent => SubjectKind::Agent,
        }
    }
}

/// Predicate of a capture rule. Every present field must match; an empty
/// match accepts everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SubjectKind>,
    /// Pattern over the agents the candidate concerns (ids and names).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    /// Attr key -> value pattern; the key must be present.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureRule {
    #[serde(rename = "match", default)]
    pub matcher: CaptureMatch,
    pub action: CaptureAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retention_s: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapturePolicy {
    pub default_action: CaptureAction,
    #[serde(default)]
    pub rules: Vec<CaptureRule>,
}

impl Default for CapturePolicy {
    fn default() -> Self {
        Self::record_everything()
    }
}

/// The facts about a candidate that rules can see.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSubject {
    pub kind: SubjectKind,
    pub agents: Vec<String>,
    pub attrs: BTreeMap<String, String>,
    pub boundary: Option<Boundary>,
}

impl CaptureMatch {
    pub fn matches(&self, subject: &CaptureSubject) -> Result<bool> {
        if let Some(kind) = self.kind {
            if kind != subject.kind {
                return Ok(false);
            }
        }
        if let Some(b) = self.boundary {
            if subject.boundary != Some(b) {
                return Ok(false);
            }
        }
        if let Some(pattern) = &self.agent {
            let mut hit = false;
            for a in &subject.agents {
                hit |= glob_match(pattern, a)?;
            }
            if !hit {
                return Ok(false);
            }
        }
        for (key, pattern) in &self.attrs {
            match subject.attrs.get(key) {
                Some(v) if glob_match(pattern, v)? => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    fn validate(&self) -> Result<()> {
        for p in self.agent.iter().chain(self.attrs.values()) {
            glob_match(p, "")?;
        }
        Ok(())
    }
}

impl CapturePolicy {
    pub fn record_everything() -> Self {
        Self { default_action: CaptureAction::RecordFull, rules: Vec::new() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let policy: Self = serde_json::from_str(text)?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, rule) in self.rules.iter().enumerate() {
            rule.matcher.validate()?;
            if rule.retention_s == Some(0) {
                return Err(Error::InvalidPolicy(format!("rule {i}: retention must be positive")));
            }
        }
        Ok(())
    }

    /// Index of the first rule matching `subject`.
    pub fn matching_rule(&self, subject: &CaptureSubject) -> Result<Option<usize>> {
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.matcher.matches(subject)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// First matching rule's action, else the default action.
    pub fn evaluate(&self, subject: &CaptureSubject) -> Result<CaptureAction> {
        Ok(match self.matching_rule(subject)? {
            Some(i) => self.rules[i].action,
            None => self.default_action,
        })
    }

    /// Retention (seconds) that applies to `subject`, if any.
    pub fn retention_for(&self, subject: &CaptureSubject) -> Result<Option<u64>> {
        Ok(self.matching_rule(subject)?.and_then(|i| self.rules[i].retention_s))
    }
}

/// Per-attribute tags set by emitters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrTags {
    #[serde(default)]
    pub pd: bool,
    #[serde(default)]
    pub payload: bool,
}

/// A raw attribute: a bare scalar or a tagged one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawAttr {
    Tagged {
        value: AttrValue,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        pd: bool,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        payload: bool,
    },
    Plain(AttrValue),
}

/// A payload on its way into the log, with attribute tags kept alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub draft: Draft,
    pub tags: BTreeMap<String, AttrTags>,
    /// Explicit id, for replays; generated otherwise.
    pub id: Option<NodeId>,
}

impl From<Draft> for Candidate {
    fn from(draft: Draft) -> Self {
        Self { draft, tags: BTreeMap::new(), id: None }
    }
}

impl Candidate {
    /// A node candidate built from raw, possibly tagged attributes.
    pub fn node(kind: NodeKind, timestamp: Timestamp, raw: BTreeMap<String, RawAttr>) -> Self {
        let mut attrs = Attrs::new();
        let mut tags = BTreeMap::new();
        for (k, v) in raw {
            match v {
                RawAttr::Plain(value) => {
                    attrs.insert(k, value);
                }
                RawAttr::Tagged { value, pd, payload } => {
                    if pd || payload {
                        tags.insert(k.clone(), AttrTags { pd, payload });
                    }
                    attrs.insert(k, value);
                }
            }
        }
        Self { draft: Draft::Node { kind, timestamp, attrs }, tags, id: None }
    }

    pub fn is_personal(&self, key: &str) -> bool {
        self.tags.get(key).is_some_and(|t| t.pd)
    }

    /// What rules see. Agent names are resolved through `graph` when given.
    pub fn subject(&self, graph: Option<&ProvGraph>) -> CaptureSubject {
        let name_of = |id: &NodeId| -> Option<String> {
            graph.and_then(|g| g.get_node(id).ok()).and_then(|n| n.attr_str("name")).map(str::to_owned)
        };
        let mut agents = Vec::new();
        let mut push_agent = |id: &NodeId| {
            agents.push(id.to_string());
            agents.extend(name_of(id));
        };
        match &self.draft {
            Draft::Node { kind, attrs, .. } => {
                let attrs = stringify(attrs);
                let mut agents: Vec<String> = attrs.get("agent").cloned().into_iter().collect();
                if *kind == NodeKind::Agent {
                    agents.extend(attrs.get("name").cloned());
                }
                CaptureSubject { kind: (*kind).into(), agents, attrs, boundary: None }
            }
            Draft::Relation { src, dst, .. } => {
                push_agent(src);
                push_agent(dst);
                CaptureSubject { kind: SubjectKind::Relation, agents, attrs: BTreeMap::new(), boundary: None }
            }
            Draft::Flow { from_agent, to_agent, boundary, .. } => {
                push_agent(from_agent);
                push_agent(to_agent);
                CaptureSubject { kind: SubjectKind::Flow, agents, attrs: BTreeMap::new(), boundary: Some(*boundary) }
            }
        }
    }

    /// Applies `action`, returning the draft to store (None for Drop).
    pub fn transform(&self, action: CaptureAction) -> Option<Draft> {
        let mut draft = self.draft.clone();
        match action {
            CaptureAction::Drop => return None,
            CaptureAction::RecordFull => {}
            CaptureAction::RecordMetadataOnly | CaptureAction::Redact => {
                if let Draft::Node { attrs, .. } = &mut draft {
                    if action == CaptureAction::Redact {
                        for (k, v) in attrs.iter_mut() {
                            if self.is_personal(k) {
                                *v = AttrValue::Text(REDACTED.into());
                            }
                        }
                    } else {
                        attrs.retain(|k, _| !self.tags.get(k).is_some_and(|t| t.payload));
                    }
                    attrs.insert(CAPTURE_ACTION_ATTR.into(), action.name().into());
                }
            }
        }
        Some(draft)
    }
}

fn stringify(attrs: &Attrs) -> BTreeMap<String, String> {
    attrs.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
}

/// Result of passing a candidate through the gate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub appended: Option<NodeId>,
    pub action_taken: CaptureAction,
}

/// Evaluates the policy on `candidate` and appends the transformed payload.
pub fn gate_append(policy: &CapturePolicy, candidate: &Candidate, log: &mut ProvLog) -> Result<GateOutcome> {
    let action = policy.evaluate(&candidate.subject(Some(log.graph())))?;
    let appended = match candidate.transform(action) {
        None => None,
        Some(draft) => Some(match &candidate.id {
            Some(id) => log.append_payload(draft.with_id(id.clone()))?,
            None => log.append(draft)?,
        }),
    };
    Ok(GateOutcome { appended, action_taken: action })
}

/// Subject view of a node that is already stored.
pub fn stored_subject(node: &ProvNode) -> CaptureSubject {
    Candidate::from(Draft::Node { kind: node.kind, timestamp: node.timestamp, attrs: node.attrs.clone() }).subject(None)
}

/// A compacted copy of a log with expired nodes tombstoned.
pub struct Expiry {
    pub log: ProvLog,
    pub tombstoned: Vec<NodeId>,
}

/// Tombstones every node whose age at `now` exceeds the retention of the
/// first rule it matches. Relations and flows are kept as they are, so the
/// graph shape, ids and timestamps are unchanged; the chain is recomputed
/// over the new payloads. The input graph is not modified.
pub fn expire(policy: &CapturePolicy, graph: &ProvGraph, now: Timestamp) -> Result<Expiry> {
    let mut out = ProvLog::in_memory();
    let mut tombstoned = Vec::new();
    for record in graph.records() {
        let mut payload = record.payload.clone();
        if let Payload::Node(node) = &mut payload {
            let already = node.attr_bool(TOMBSTONE_ATTR) == Some(true);
            if !already {
                if let Some(retention) = policy.retention_for(&stored_subject(node))? {
                    if now.since(node.timestamp) > retention as i64 * 1000 {
                        node.attrs = Attrs::from([(TOMBSTONE_ATTR.to_owned(), AttrValue::Bool(true))]);
                        tombstoned.push(node.id.clone());
                    }
                }
            }
        }
        out.append_payload(payload)?;
    }
    Ok(Expiry { log: out, tombstoned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::attrs;
    use crate::model::RelKind;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    fn entity_subject(pairs: &[(&str, &str)]) -> CaptureSubject {
        let a = attrs(pairs.iter().map(|(k, v)| (*k, *v)));
        Candidate::from(Draft::entity(ts(0), a)).subject(None)
    }

    #[test]
    fn empty_policy_uses_default() {
        let p = CapturePolicy::record_everything();
        assert_eq!(p.evaluate(&entity_subject(&[("x", "y")])).unwrap(), CaptureAction::RecordFull);
    }

    #[test]
    fn personal_category_rule_redacts() {
        let p = CapturePolicy::from_json(
            r#"{"default_action":"record_full","rules":[{"match":{"attrs":{"category":"personal"}},"action":"redact"}]}"#,
        )
        .unwrap();
        let s = entity_subject(&[("category", "personal"), ("source", "camera")]);
        assert_eq!(p.evaluate(&s).unwrap(), CaptureAction::Redact);
        let s = entity_subject(&[("category", "telemetry")]);
        assert_eq!(p.evaluate(&s).unwrap(), CaptureAction::RecordFull);
    }

    #[test]
    fn first_match_wins() {
        let p = CapturePolicy {
            default_action: CaptureAction::RecordFull,
            rules: vec![
                CaptureRule {
                    matcher: CaptureMatch { kind: Some(SubjectKind::Entity), ..Default::default() },
                    action: CaptureAction::Drop,
                    retention_s: None,
                },
                CaptureRule { matcher: CaptureMatch::default(), action: CaptureAction::Redact, retention_s: None },
            ],
        };
        assert_eq!(p.evaluate(&entity_subject(&[])).unwrap(), CaptureAction::Drop);
        let agent = Candidate::from(Draft::agent(ts(0), attrs([("name", "CarNet")]))).subject(None);
        assert_eq!(p.evaluate(&agent).unwrap(), CaptureAction::Redact);
    }

    #[test]
    fn malformed_patterns_and_zero_retention_are_rejected() {
        let bad = r#"{"default_action":"drop","rules":[{"match":{"agent":"*a*"},"action":"redact"}]}"#;
        assert!(matches!(CapturePolicy::from_json(bad), Err(Error::MalformedPattern(_))));
        let zero = r#"{"default_action":"drop","rules":[{"match":{},"action":"redact","retention_s":0}]}"#;
        assert!(matches!(CapturePolicy::from_json(zero), Err(Error::InvalidPolicy(_))));
    }

    fn camera_candidate() -> Candidate {
        let raw: BTreeMap<String, RawAttr> =
            serde_json::from_str(r#"{"camera_frame":{"value":"frame-bytes-123","pd":true},"brightness":0.12}"#)
                .unwrap();
        Candidate::node(NodeKind::Entity, ts(0), raw)
    }

    #[test]
    fn redact_replaces_personal_values_only() {
        let mut log = ProvLog::in_memory();
        let policy = CapturePolicy { default_action: CaptureAction::Redact, rules: vec![] };
        let out = gate_append(&policy, &camera_candidate(), &mut log).unwrap();
        assert_eq!(out.action_taken, CaptureAction::Redact);
        let node = log.graph().get_node(&out.appended.unwrap()).unwrap();
        let expected = attrs([
            ("camera_frame", AttrValue::from(REDACTED)),
            ("brightness", AttrValue::from(0.12)),
            ("capture_action", AttrValue::from("redact")),
        ]);
        assert_eq!(node.attrs, expected);
        assert!(!log.to_jsonl().contains("frame-bytes-123"));
    }

    #[test]
    fn drop_appends_nothing() {
        let mut log = ProvLog::in_memory();
        let policy = CapturePolicy { default_action: CaptureAction::Drop, rules: vec![] };
        let out = gate_append(&policy, &camera_candidate(), &mut log).unwrap();
        assert_eq!(out.appended, None);
        assert!(log.is_empty());
    }

    #[test]
    fn metadata_only_strips_payload_bearing_attrs() {
        let raw: BTreeMap<String, RawAttr> =
            serde_json::from_str(r#"{"blob":{"value":"xyz","payload":true},"size":3}"#).unwrap();
        let c = Candidate::node(NodeKind::Entity, ts(0), raw);
        let Some(Draft::Node { attrs: a, .. }) = c.transform(CaptureAction::RecordMetadataOnly) else {
            panic!("expected node");
        };
        assert_eq!(a, attrs([("size", AttrValue::from(3i64)), ("capture_action", "record_metadata_only".into())]));
    }

    #[test]
    fn flows_match_on_boundary_and_resolved_agent_names() {
        let mut log = ProvLog::in_memory();
        let a = log.append(Draft::agent(ts(0), attrs([("name", "CloudMap")]))).unwrap();
        let b = log.append(Draft::agent(ts(0), attrs([("name", "SmartLight")]))).unwrap();
        let e = log.append(Draft::entity(ts(1), Default::default())).unwrap();
        let policy = CapturePolicy::from_json(
            r#"{"default_action":"record_full","rules":[{"match":{"kind":"flow","agent":"Smart*","boundary":"administrative"},"action":"drop"}]}"#,
        )
        .unwrap();
        let c = Candidate::from(Draft::flow(&e, &a, &b, Boundary::Administrative, ts(2)));
        let out = gate_append(&policy, &c, &mut log).unwrap();
        assert_eq!(out.action_taken, CaptureAction::Drop);
        let c = Candidate::from(Draft::flow(&e, &a, &b, Boundary::Technical, ts(2)));
        assert!(gate_append(&policy, &c, &mut log).unwrap().appended.is_some());
    }

    #[test]
    fn expire_tombstones_past_retention_only() {
        let mut log = ProvLog::in_memory();
        let hour = 3_600_000;
        let old = log.append(Draft::entity(ts(0), attrs([("category", "camera")]))).unwrap();
        let fresh = log.append(Draft::entity(ts(2 * hour), attrs([("category", "camera")]))).unwrap();
        log.append(Draft::relation(RelKind::DerivedFrom, &fresh, &old, ts(2 * hour))).unwrap();
        let policy = CapturePolicy::from_json(
            r#"{"default_action":"record_full","rules":[{"match":{"attrs":{"category":"camera"}},"action":"record_full","retention_s":86400}]}"#,
        )
        .unwrap();
        let out = expire(&policy, log.graph(), ts(25 * hour)).unwrap();
        assert_eq!(out.tombstoned, vec![old.clone()]);
        let node = out.log.graph().get_node(&old).unwrap();
        assert_eq!(node.attr_bool(TOMBSTONE_ATTR), Some(true));
        assert_eq!(node.attrs.len(), 1);
        assert_eq!(out.log.len(), log.len());
        assert_eq!(log.graph().get_node(&old).unwrap().attr_str("category"), Some("camera"));
        assert!(crate::log::verify_records(out.log.graph().records()).ok);

        let none = expire(&CapturePolicy::record_everything(), log.graph(), ts(1000 * hour)).unwrap();
        assert!(none.tombstoned.is_empty());
    }
}

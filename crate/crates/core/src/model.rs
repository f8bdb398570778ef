//! Provenance data model and the JSON Lines wire format of the log.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attrs::{AttrValue, Attrs};
use crate::error::{Error, Result};
use crate::time::Timestamp;

/// `prev_hash` of the first record in a log.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// Opaque record identifier. Generated ids are the zero-padded log sequence
/// number, so lexicographic order is creation order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if s.is_empty() {
            return Err(Error::InvalidPayload("empty id".into()));
        }
        Ok(Self(s))
    }

    pub fn from_seq(seq: u64) -> Self {
        Self(format!("n{seq:010}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        NodeId::new(s)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Activity,
    Agent,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Entity => "entity",
            NodeKind::Activity => "activity",
            NodeKind::Agent => "agent",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relation types. `src` is always the dependent side: the activity that
/// used, the entity that was generated or derived, the thing attributed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelKind {
    /// activity -> entity (or activity, for review-time records)
    Used,
    /// entity -> activity
    Generated,
    /// entity -> entity
    DerivedFrom,
    /// entity -> agent
    AttributedTo,
    /// activity -> agent
    AssociatedWith,
}

impl RelKind {
    pub const ALL: [RelKind; 5] =
        [RelKind::Used, RelKind::Generated, RelKind::DerivedFrom, RelKind::AttributedTo, RelKind::AssociatedWith];

    /// Relations that carry data lineage and must respect time order.
    pub const LINEAGE: [RelKind; 3] = [RelKind::Used, RelKind::Generated, RelKind::DerivedFrom];

    pub fn is_lineage(self) -> bool {
        matches!(self, RelKind::Used | RelKind::Generated | RelKind::DerivedFrom)
    }

    pub fn name(self) -> &'static str {
        match self {
            RelKind::Used => "used",
            RelKind::Generated => "generated",
            RelKind::DerivedFrom => "derived_from",
            RelKind::AttributedTo => "attributed_to",
            RelKind::AssociatedWith => "associated_with",
        }
    }

    pub(crate) fn allowed_src(self) -> &'static [NodeKind] {
        match self {
            RelKind::Used | RelKind::AssociatedWith => &[NodeKind::Activity],
            RelKind::Generated | RelKind::DerivedFrom | RelKind::AttributedTo => &[NodeKind::Entity],
        }
    }

    pub(crate) fn allowed_dst(self) -> &'static [NodeKind] {
        match self {
            RelKind::Used => &[NodeKind::Entity, NodeKind::Activity],
            RelKind::Generated => &[NodeKind::Activity],
            RelKind::DerivedFrom => &[NodeKind::Entity],
            RelKind::AttributedTo | RelKind::AssociatedWith => &[NodeKind::Agent],
        }
    }
}

impl fmt::Display for RelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    None,
    Technical,
    Administrative,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::None => "none",
            Boundary::Technical => "technical",
            Boundary::Administrative => "administrative",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProvNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub timestamp: Timestamp,
    pub attrs: Attrs,
}

impl ProvNode {
    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.attrs.get(key)
    }

    pub fn attr_str(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).and_then(AttrValue::as_str)
    }

    pub fn attr_bool(&self, key: &str) -> Option<bool> {
        self.attrs.get(key).and_then(AttrValue::as_bool)
    }

    /// Human-facing name: the `label` attr, then `name`, then the id.
    pub fn display_name(&self) -> &str {
        self.attr_str("label").or_else(|| self.attr_str("name")).unwrap_or(self.id.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProvRelation {
    pub id: NodeId,
    pub rel: RelKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: Timestamp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowEvent {
    pub id: NodeId,
    pub entity: NodeId,
    pub from_agent: NodeId,
    pub to_agent: NodeId,
    pub boundary: Boundary,
    pub timestamp: Timestamp,
}

/// Anything that can be stored in the log.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Node(ProvNode),
    Relation(ProvRelation),
    Flow(FlowEvent),
}

impl Payload {
    pub fn id(&self) -> &NodeId {
        match self {
            Payload::Node(n) => &n.id,
            Payload::Relation(r) => &r.id,
            Payload::Flow(f) => &f.id,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        match self {
            Payload::Node(n) => n.timestamp,
            Payload::Relation(r) => r.timestamp,
            Payload::Flow(f) => f.timestamp,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Node(n) => n.kind.name(),
            Payload::Relation(_) => "relation",
            Payload::Flow(_) => "flow",
        }
    }

    pub fn as_node(&self) -> Option<&ProvNode> {
        match self {
            Payload::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_relation(&self) -> Option<&ProvRelation> {
        match self {
            Payload::Relation(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_flow(&self) -> Option<&FlowEvent> {
        match self {
            Payload::Flow(f) => Some(f),
            _ => None,
        }
    }

    /// Canonical serialization: sorted keys, no whitespace, UTF-8.
    pub fn canonical_json(&self) -> String {
        canonical_string(&WireRecord::from_payload(self, None))
    }

    /// The payload in its wire shape, without chain fields.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(WireRecord::from_payload(self, None)).expect("wire records always serialize")
    }
}

/// A payload awaiting an id.
#[derive(Clone, Debug, PartialEq)]
pub enum Draft {
    Node { kind: NodeKind, timestamp: Timestamp, attrs: Attrs },
    Relation { rel: RelKind, src: NodeId, dst: NodeId, timestamp: Timestamp },
    Flow { entity: NodeId, from_agent: NodeId, to_agent: NodeId, boundary: Boundary, timestamp: Timestamp },
}

impl Draft {
    pub fn entity(timestamp: Timestamp, attrs: Attrs) -> Self {
        Draft::Node { kind: NodeKind::Entity, timestamp, attrs }
    }

    pub fn activity(timestamp: Timestamp, attrs: Attrs) -> Self {
        Draft::Node { kind: NodeKind::Activity, timestamp, attrs }
    }

    pub fn agent(timestamp: Timestamp, attrs: Attrs) -> Self {
        Draft::Node { kind: NodeKind::Agent, timestamp, attrs }
    }

    pub fn relation(rel: RelKind, src: &NodeId, dst: &NodeId, timestamp: Timestamp) -> Self {
        Draft::Relation { rel, src: src.clone(), dst: dst.clone(), timestamp }
    }

    pub fn flow(
        entity: &NodeId,
        from_agent: &NodeId,
        to_agent: &NodeId,
        boundary: Boundary,
        timestamp: Timestamp,
    ) -> Self {
        Draft::Flow {
            entity: entity.clone(),
            from_agent: from_agent.clone(),
            to_agent: to_agent.clone(),
            boundary,
            timestamp,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        match self {
            Draft::Node { timestamp, .. } | Draft::Relation { timestamp, .. } | Draft::Flow { timestamp, .. } => {
                *timestamp
            }
        }
    }

    pub fn with_id(self, id: NodeId) -> Payload {
        match self {
            Draft::Node { kind, timestamp, attrs } => Payload::Node(ProvNode { id, kind, timestamp, attrs }),
            Draft::Relation { rel, src, dst, timestamp } => {
                Payload::Relation(ProvRelation { id, rel, src, dst, timestamp })
            }
            Draft::Flow { entity, from_agent, to_agent, boundary, timestamp } => {
                Payload::Flow(FlowEvent { id, entity, from_agent, to_agent, boundary, timestamp })
            }
        }
    }
}

impl From<Payload> for Draft {
    fn from(p: Payload) -> Self {
        match p {
            Payload::Node(n) => Draft::Node { kind: n.kind, timestamp: n.timestamp, attrs: n.attrs },
            Payload::Relation(r) => Draft::Relation { rel: r.rel, src: r.src, dst: r.dst, timestamp: r.timestamp },
            Payload::Flow(f) => Draft::Flow {
                entity: f.entity,
                from_agent: f.from_agent,
                to_agent: f.to_agent,
                boundary: f.boundary,
                timestamp: f.timestamp,
            },
        }
    }
}

/// One line of the log: a payload chained to its predecessor.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub payload: Payload,
    pub prev_hash: String,
    pub hash: String,
}

impl LogRecord {
    /// Seals `payload` onto a chain whose head is `prev_hash`.
    pub fn seal(payload: Payload, prev_hash: &str) -> Self {
        let hash = chain_hash(&payload.canonical_json(), prev_hash);
        Self { payload, prev_hash: prev_hash.to_owned(), hash }
    }

    /// Whether the stored hash matches the payload and `prev_hash`.
    pub fn hash_is_valid(&self) -> bool {
        chain_hash(&self.payload.canonical_json(), &self.prev_hash) == self.hash
    }

    /// The canonical line, without trailing newline.
    pub fn to_line(&self) -> String {
        canonical_string(&WireRecord::from_payload(&self.payload, Some((&self.prev_hash, &self.hash))))
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let wire: WireRecord = serde_json::from_str(line)?;
        wire.into_record()
    }
}

/// Lowercase hex SHA-256 of `payload_json ∥ prev_hash`.
pub fn chain_hash(payload_json: &str, prev_hash: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(payload_json.as_bytes());
    hasher.update(prev_hash.as_bytes());
    hex::encode(hasher.finalize())
}

fn canonical_string<T: Serialize>(value: &T) -> String {
    // serde_json::Map is a BTreeMap here, so going through Value sorts keys.
    let value = serde_json::to_value(value).expect("wire records always serialize");
    value.to_string()
}

fn is_hex64(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    kind: String,
    id: NodeId,
    timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attrs: Option<Attrs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel: Option<RelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    src: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dst: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entity: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from_agent: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to_agent: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<Boundary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prev_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hash: Option<String>,
}

impl WireRecord {
    fn empty(kind: &str, id: &NodeId, timestamp: Timestamp) -> Self {
        Self {
            kind: kind.to_owned(),
            id: id.clone(),
            timestamp,
            attrs: None,
            rel: None,
            src: None,
            dst: None,
            entity: None,
            from_agent: None,
            to_agent: None,
            boundary: None,
            prev_hash: None,
            hash: None,
        }
    }

    fn from_payload(payload: &Payload, chain: Option<(&str, &str)>) -> Self {
        let mut w = Self::empty(payload.kind_name(), payload.id(), payload.timestamp());
        match payload {
            Payload::Node(n) => w.attrs = Some(n.attrs.clone()),
            Payload::Relation(r) => {
                w.rel = Some(r.rel);
                w.src = Some(r.src.clone());
                w.dst = Some(r.dst.clone());
            }
            Payload::Flow(f) => {
                w.entity = Some(f.entity.clone());
                w.from_agent = Some(f.from_agent.clone());
                w.to_agent = Some(f.to_agent.clone());
                w.boundary = Some(f.boundary);
            }
        }
        if let Some((prev, hash)) = chain {
            w.prev_hash = Some(prev.to_owned());
            w.hash = Some(hash.to_owned());
        }
        w
    }

    fn into_record(self) -> Result<LogRecord> {
        let bad = |m: &str| Error::InvalidPayload(m.to_owned());
        let (Some(prev_hash), Some(hash)) = (self.prev_hash, self.hash) else {
            return Err(bad("record lacks prev_hash/hash"));
        };
        if !is_hex64(&prev_hash) || !is_hex64(&hash) {
            return Err(bad("hashes must be 64 lowercase hex characters"));
        }
        let node_fields = self.attrs.is_some();
        let rel_fields = self.rel.is_some() || self.src.is_some() || self.dst.is_some();
        let flow_fields =
            self.entity.is_some() || self.from_agent.is_some() || self.to_agent.is_some() || self.boundary.is_some();
        let payload = match self.kind.as_str() {
            "entity" | "activity" | "agent" => {
                if rel_fields || flow_fields {
                    return Err(bad("node record carries edge fields"));
                }
                let kind = match self.kind.as_str() {
                    "entity" => NodeKind::Entity,
                    "activity" => NodeKind::Activity,
                    _ => NodeKind::Agent,
                };
                Payload::Node(ProvNode {
                    id: self.id,
                    kind,
                    timestamp: self.timestamp,
                    attrs: self.attrs.ok_or_else(|| bad("node record lacks attrs"))?,
                })
            }
            "relation" => {
                if node_fields || flow_fields {
                    return Err(bad("relation record carries foreign fields"));
                }
                Payload::Relation(ProvRelation {
                    id: self.id,
                    rel: self.rel.ok_or_else(|| bad("relation lacks rel"))?,
                    src: self.src.ok_or_else(|| bad("relation lacks src"))?,
                    dst: self.dst.ok_or_else(|| bad("relation lacks dst"))?,
                    timestamp: self.timestamp,
                })
            }
            "flow" => {
                if node_fields || rel_fields {
                    return Err(bad("flow record carries foreign fields"));
                }
                Payload::Flow(FlowEvent {
                    id: self.id,
                    entity: self.entity.ok_or_else(|| bad("flow lacks entity"))?,
                    from_agent: self.from_agent.ok_or_else(|| bad("flow lacks from_agent"))?,
                    to_agent: self.to_agent.ok_or_else(|| bad("flow lacks to_agent"))?,
                    boundary: self.boundary.ok_or_else(|| bad("flow lacks boundary"))?,
                    timestamp: self.timestamp,
                })
            }
            other => return Err(Error::InvalidPayload(format!("unknown record kind {other:?}"))),
        };
        Ok(LogRecord { payload, prev_hash, hash })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::attrs;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    #[test]
    fn node_line_has_exact_field_set() {
        let p = Draft::agent(ts(0), attrs([("name", "CarNet")])).with_id(NodeId::from_seq(0));
        let rec = LogRecord::seal(p, GENESIS_HASH);
        let line = rec.to_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["attrs", "hash", "id", "kind", "prev_hash", "timestamp"]);
        assert!(line.starts_with(r#"{"attrs":{"name":"CarNet"},"hash":""#));
        assert_eq!(LogRecord::from_line(&line).unwrap(), rec);
    }

    #[test]
    fn flow_and_relation_lines_round_trip() {
        let a = NodeId::from_seq(1);
        let b = NodeId::from_seq(2);
        let e = NodeId::from_seq(3);
        let rel = LogRecord::seal(
            Draft::relation(RelKind::DerivedFrom, &a, &b, ts(5)).with_id(NodeId::from_seq(4)),
            GENESIS_HASH,
        );
        let flow = LogRecord::seal(
            Draft::flow(&e, &a, &b, Boundary::Administrative, ts(6)).with_id(NodeId::from_seq(5)),
            &rel.hash,
        );
        for rec in [rel, flow] {
            let line = rec.to_line();
            assert_eq!(LogRecord::from_line(&line).unwrap(), rec);
            assert!(rec.hash_is_valid());
        }
    }

    #[test]
    fn mixed_field_sets_are_rejected() {
        let line = r#"{"attrs":{},"hash":"0000000000000000000000000000000000000000000000000000000000000000","id":"x","kind":"relation","prev_hash":"0000000000000000000000000000000000000000000000000000000000000000","rel":"used","src":"a","dst":"b","timestamp":"2024-01-01T00:00:00.000Z"}"#;
        assert!(LogRecord::from_line(line).is_err());
        let unknown = r#"{"attrs":{},"extra":1,"hash":"0000000000000000000000000000000000000000000000000000000000000000","id":"x","kind":"entity","prev_hash":"0000000000000000000000000000000000000000000000000000000000000000","timestamp":"2024-01-01T00:00:00.000Z"}"#;
        assert!(LogRecord::from_line(unknown).is_err());
    }

    #[test]
    fn generated_ids_sort_by_sequence() {
        assert!(NodeId::from_seq(9) < NodeId::from_seq(10));
        assert!(NodeId::new("").is_err());
    }
}

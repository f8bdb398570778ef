//! In-memory index over an accepted sequence of log records.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{
    Boundary, FlowEvent, LogRecord, NodeId, NodeKind, Payload, ProvNode, ProvRelation, RelKind, GENESIS_HASH,
};
use crate::time::Timestamp;

/// Which side of a relation to follow from a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// From `src` to `dst`: inputs, sources, attributed agents.
    Upstream,
    /// From `dst` to `src`: consumers, derivations.
    Downstream,
}

/// Immutable view of the log at some length, with lookup indexes.
///
/// Only records that passed validation are ever pushed, so every relation
/// and flow refers to nodes of the right kind and lineage edges point back
/// in `(timestamp, id)` order.
#[derive(Clone, Debug, Default)]
pub struct ProvGraph {
    records: Vec<LogRecord>,
    index: HashMap<NodeId, usize>,
    outgoing: HashMap<NodeId, Vec<usize>>,
    incoming: HashMap<NodeId, Vec<usize>>,
    flows_by_entity: HashMap<NodeId, Vec<usize>>,
    last_id: Option<NodeId>,
}

impl ProvGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    /// Hash the next record must chain to.
    pub fn head_hash(&self) -> &str {
        self.records.last().map(|r| r.hash.as_str()).unwrap_or(GENESIS_HASH)
    }

    pub fn last_id(&self) -> Option<&NodeId> {
        self.last_id.as_ref()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &NodeId) -> Option<&Payload> {
        self.index.get(id).map(|&i| &self.records[i].payload)
    }

    /// Position of the record in the log.
    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get_node(&self, id: &NodeId) -> Result<&ProvNode> {
        self.get(id).and_then(Payload::as_node).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn get_relation(&self, id: &NodeId) -> Result<&ProvRelation> {
        self.get(id).and_then(Payload::as_relation).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn get_flow(&self, id: &NodeId) -> Result<&FlowEvent> {
        self.get(id).and_then(Payload::as_flow).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ProvNode> {
        self.records.iter().filter_map(|r| r.payload.as_node())
    }

    pub fn relations(&self) -> impl Iterator<Item = &ProvRelation> {
        self.records.iter().filter_map(|r| r.payload.as_relation())
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowEvent> {
        self.records.iter().filter_map(|r| r.payload.as_flow())
    }

    /// Relations whose `src` is `id`.
    pub fn relations_from<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a ProvRelation> + 'a {
        self.edge_list(&self.outgoing, id)
    }

    /// Relations whose `dst` is `id`.
    pub fn relations_to<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a ProvRelation> + 'a {
        self.edge_list(&self.incoming, id)
    }

    fn edge_list<'a>(
        &'a self,
        map: &'a HashMap<NodeId, Vec<usize>>,
        id: &NodeId,
    ) -> impl Iterator<Item = &'a ProvRelation> + 'a {
        map.get(id).into_iter().flatten().filter_map(move |&i| self.records[i].payload.as_relation())
    }

    /// Flow events moving `entity`.
    pub fn flows_of<'a>(&'a self, entity: &NodeId) -> impl Iterator<Item = &'a FlowEvent> + 'a {
        self.flows_by_entity.get(entity).into_iter().flatten().filter_map(move |&i| self.records[i].payload.as_flow())
    }

    /// Ordering key used everywhere results are listed.
    pub fn order_key(&self, id: &NodeId) -> (Timestamp, NodeId) {
        let t = self.get(id).map(Payload::timestamp).unwrap_or(Timestamp::from_millis(i64::MIN));
        (t, id.clone())
    }

    /// Sorts ids by `(timestamp, id)` and removes duplicates.
    pub fn sort_ids(&self, ids: impl IntoIterator<Item = NodeId>) -> Vec<NodeId> {
        let keyed: BTreeSet<(Timestamp, NodeId)> = ids.into_iter().map(|id| self.order_key(&id)).collect();
        keyed.into_iter().map(|(_, id)| id).collect()
    }

    /// Adjacent nodes over relations of the given kinds (all kinds when
    /// `filter` is empty), ordered by `(timestamp, id)`.
    pub fn neighbors(&self, id: &NodeId, direction: Direction, filter: &[RelKind]) -> Result<Vec<NodeId>> {
        self.get_node(id)?;
        let keep = |r: &&ProvRelation| filter.is_empty() || filter.contains(&r.rel);
        let ids: Vec<NodeId> = match direction {
            Direction::Upstream => self.relations_from(id).filter(keep).map(|r| r.dst.clone()).collect(),
            Direction::Downstream => self.relations_to(id).filter(keep).map(|r| r.src.clone()).collect(),
        };
        Ok(self.sort_ids(ids))
    }

    /// Agents reachable from `id` over AttributedTo / AssociatedWith.
    pub fn agents_of(&self, id: &NodeId) -> Vec<NodeId> {
        let ids = self
            .relations_from(id)
            .filter(|r| matches!(r.rel, RelKind::AttributedTo | RelKind::AssociatedWith))
            .map(|r| r.dst.clone());
        self.sort_ids(ids)
    }

    /// Resolves a record id, or failing that the unique node whose `label`
    /// attr equals `key`.
    pub fn resolve(&self, key: &str) -> Result<NodeId> {
        if let Ok(id) = NodeId::new(key) {
            if self.contains(&id) {
                return Ok(id);
            }
        }
        let mut hits = self.nodes().filter(|n| n.attr_str("label") == Some(key));
        match (hits.next(), hits.next()) {
            (Some(n), None) => Ok(n.id.clone()),
            (Some(_), Some(_)) => Err(Error::AmbiguousLabel(key.to_owned())),
            (None, _) => Err(Error::UnknownId(key.to_owned())),
        }
    }

    /// Finds the unique node with `attr == value`, used for name lookups.
    pub fn find_by_attr(&self, key: &str, value: &str) -> Option<&ProvNode> {
        self.nodes().find(|n| n.attr_str(key) == Some(value))
    }

    pub fn max_timestamp(&self) -> Option<Timestamp> {
        self.records.iter().map(|r| r.payload.timestamp()).max()
    }

    /// Checks a payload against the current contents without storing it.
    pub fn validate(&self, payload: &Payload) -> Result<()> {
        let id = payload.id();
        if self.contains(id) {
            return Err(Error::DuplicateId(id.clone()));
        }
        if let Some(last) = &self.last_id {
            if id <= last {
                return Err(Error::IdOutOfOrder { id: id.clone(), last: last.clone() });
            }
        }
        match payload {
            Payload::Node(n) => {
                if n.attrs.keys().any(|k| k.is_empty()) {
                    return Err(Error::InvalidPayload(format!("{}: empty attr key", n.id)));
                }
            }
            Payload::Relation(r) => {
                let src = self.node_ref(&r.src)?;
                let dst = self.node_ref(&r.dst)?;
                check_kind(r.rel, "src", src, r.rel.allowed_src())?;
                check_kind(r.rel, "dst", dst, r.rel.allowed_dst())?;
                if r.rel.is_lineage() && (src.timestamp, &src.id) <= (dst.timestamp, &dst.id) {
                    return Err(Error::TemporalViolation {
                        downstream: src.id.clone(),
                        downstream_time: src.timestamp,
                        upstream: dst.id.clone(),
                        upstream_time: dst.timestamp,
                    });
                }
            }
            Payload::Flow(f) => {
                let entity = self.node_ref(&f.entity)?;
                let from = self.node_ref(&f.from_agent)?;
                let to = self.node_ref(&f.to_agent)?;
                let ctx = "flow";
                expect_kind(ctx, entity, NodeKind::Entity)?;
                expect_kind(ctx, from, NodeKind::Agent)?;
                expect_kind(ctx, to, NodeKind::Agent)?;
                if f.boundary != Boundary::None && f.from_agent == f.to_agent {
                    return Err(Error::InvalidPayload(format!(
                        "{}: a {} boundary crossing needs distinct agents",
                        f.id, f.boundary
                    )));
                }
            }
        }
        Ok(())
    }

    fn node_ref(&self, id: &NodeId) -> Result<&ProvNode> {
        match self.get(id) {
            Some(Payload::Node(n)) => Ok(n),
            Some(other) => Err(Error::KindMismatch {
                context: "reference".into(),
                id: id.clone(),
                expected: "node".into(),
                found: other.kind_name().into(),
            }),
            None => Err(Error::DanglingReference(id.clone())),
        }
    }

    /// Validates and then indexes a sealed record. The caller guarantees the
    /// record chains onto `head_hash()`.
    pub(crate) fn insert(&mut self, record: LogRecord) -> Result<()> {
        self.validate(&record.payload)?;
        self.push_unchecked(record);
        Ok(())
    }

    fn push_unchecked(&mut self, record: LogRecord) {
        let pos = self.records.len();
        let id = record.payload.id().clone();
        match &record.payload {
            Payload::Node(_) => {}
            Payload::Relation(r) => {
                self.outgoing.entry(r.src.clone()).or_default().push(pos);
                self.incoming.entry(r.dst.clone()).or_default().push(pos);
            }
            Payload::Flow(f) => self.flows_by_entity.entry(f.entity.clone()).or_default().push(pos),
        }
        self.index.insert(id.clone(), pos);
        self.last_id = Some(id);
        self.records.push(record);
    }

    /// Topological order of entity/activity nodes over lineage edges, oriented
    /// upstream-first. `None` if the lineage edges contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let nodes: Vec<&NodeId> = self.nodes().filter(|n| n.kind != NodeKind::Agent).map(|n| &n.id).collect();
        let mut indegree: HashMap<&NodeId, usize> = nodes.iter().map(|&id| (id, 0)).collect();
        for r in self.relations().filter(|r| r.rel.is_lineage()) {
            *indegree.get_mut(&r.src)? += 1;
        }
        let mut queue: VecDeque<&NodeId> = nodes.iter().copied().filter(|id| indegree[id] == 0).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(id) = queue.pop_front() {
            order.push(id.clone());
            for r in self.relations_to(id).filter(|r| r.rel.is_lineage()) {
                let d = indegree.get_mut(&r.src)?;
                *d -= 1;
                if *d == 0 {
                    queue.push_back(&r.src);
                }
            }
        }
        (order.len() == nodes.len()).then_some(order)
    }
}

fn check_kind(rel: RelKind, end: &str, node: &ProvNode, allowed: &[NodeKind]) -> Result<()> {
    if allowed.contains(&node.kind) {
        return Ok(());
    }
    Err(Error::KindMismatch {
        context: format!("{rel} {end}"),
        id: node.id.clone(),
        expected: allowed.iter().map(|k| k.name()).collect::<Vec<_>>().join("|"),
        found: node.kind.name().into(),
    })
}

fn expect_kind(context: &str, node: &ProvNode, kind: NodeKind) -> Result<()> {
    if node.kind == kind {
        return Ok(());
    }
    Err(Error::KindMismatch {
        context: context.into(),
        id: node.id.clone(),
        expected: kind.name().into(),
        found: node.kind.name().into(),
    })
}

//! Decision pipelines: backward and forward traces over the lineage
//! relations, the agents involved, and the boundaries crossed.
//!
//! A backward trace from a decision collects every entity and activity that
//! fed into it; a forward trace collects everything derived from it. Flow
//! events move an entity between agents without transforming it, so they
//! add no nodes of their own; a pipeline lists the flows of the entities it
//! contains.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::attrs::attrs;
use crate::error::Result;
use crate::graph::{Direction, ProvGraph};
use crate::log::ProvLog;
use crate::model::{Boundary, Draft, NodeId, NodeKind, RelKind};
use crate::time::Window;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDirection {
    Backward,
    Forward,
}

impl TraceDirection {
    fn graph_direction(self) -> Direction {
        match self {
            TraceDirection::Backward => Direction::Upstream,
            TraceDirection::Forward => Direction::Downstream,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceDirection::Backward => "backward",
            TraceDirection::Forward => "forward",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceOptions {
    pub window: Option<Window>,
    pub max_depth: Option<usize>,
}

/// The subgraph around a root found by a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pipeline {
    pub root: NodeId,
    pub direction: TraceDirection,
    /// Every node reached, root included, in `(timestamp, id)` order.
    pub nodes: Vec<NodeId>,
    /// Nodes one hop from the root.
    pub immediate: Vec<NodeId>,
    /// Lineage relations with both endpoints in `nodes`.
    pub edges: Vec<NodeId>,
    /// Flow events of entities in `nodes` (inside the window, if any).
    pub flows: Vec<NodeId>,
    /// Agents attributed or associated with any node.
    pub actors: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl Pipeline {
    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains(id)
    }
}

pub fn trace(graph: &ProvGraph, root: &NodeId, direction: TraceDirection, opts: TraceOptions) -> Result<Pipeline> {
    graph.get_node(root)?;
    let in_window = |id: &NodeId| match (&opts.window, graph.get(id)) {
        (Some(w), Some(p)) => w.contains(p.timestamp()),
        _ => true,
    };

    let mut depth: HashMap<NodeId, usize> = HashMap::from([(root.clone(), 0)]);
    let mut queue = VecDeque::from([root.clone()]);
    while let Some(id) = queue.pop_front() {
        let d = depth[&id];
        if opts.max_depth.is_some_and(|m| d >= m) {
            continue;
        }
        for next in graph.neighbors(&id, direction.graph_direction(), &RelKind::LINEAGE)? {
            if !depth.contains_key(&next) && in_window(&next) {
                depth.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }

    let node_set: BTreeSet<&NodeId> = depth.keys().collect();
    let nodes = graph.sort_ids(depth.keys().cloned());
    let immediate = graph.sort_ids(depth.iter().filter(|(_, &d)| d == 1).map(|(id, _)| id.clone()));

    let mut edges = Vec::new();
    let mut flows = Vec::new();
    let mut actors = Vec::new();
    for id in &nodes {
        for r in graph.relations_from(id) {
            if r.rel.is_lineage() && node_set.contains(&r.dst) {
                edges.push(r.id.clone());
            }
        }
        flows.extend(graph.flows_of(id).filter(|f| in_window(&f.id)).map(|f| f.id.clone()));
        actors.extend(graph.agents_of(id));
    }

    Ok(Pipeline {
        root: root.clone(),
        direction,
        nodes,
        immediate,
        edges: graph.sort_ids(edges),
        flows: graph.sort_ids(flows),
        actors: graph.sort_ids(actors),
        window: opts.window,
    })
}

pub fn trace_back(graph: &ProvGraph, root: &NodeId, opts: TraceOptions) -> Result<Pipeline> {
    trace(graph, root, TraceDirection::Backward, opts)
}

pub fn trace_forward(graph: &ProvGraph, root: &NodeId, opts: TraceOptions) -> Result<Pipeline> {
    trace(graph, root, TraceDirection::Forward, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// An entity in the pipeline is attributed to the agent.
    AttributedSource,
    /// An activity in the pipeline is associated with the agent.
    Processor,
    /// The agent received an entity of the pipeline through a flow.
    Recipient,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::AttributedSource => "attributed-source",
            Role::Processor => "processor",
            Role::Recipient => "recipient",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorRoles {
    pub agent: NodeId,
    pub name: String,
    pub roles: BTreeSet<Role>,
}

/// Agents involved in a pipeline with the roles they play, in
/// `(timestamp, id)` order of the agent nodes.
pub fn actors_involved(graph: &ProvGraph, pipeline: &Pipeline) -> Vec<ActorRoles> {
    let mut roles: BTreeMap<NodeId, BTreeSet<Role>> = BTreeMap::new();
    for id in &pipeline.nodes {
        for r in graph.relations_from(id) {
            let role = match r.rel {
                RelKind::AttributedTo => Role::AttributedSource,
                RelKind::AssociatedWith => Role::Processor,
                _ => continue,
            };
            roles.entry(r.dst.clone()).or_default().insert(role);
        }
    }
    for f in pipeline.flows.iter().filter_map(|id| graph.get_flow(id).ok()) {
        roles.entry(f.to_agent.clone()).or_default().insert(Role::Recipient);
    }
    graph
        .sort_ids(roles.keys().cloned())
        .into_iter()
        .map(|agent| {
            let name = graph.get_node(&agent).map(|n| n.display_name().to_owned()).unwrap_or_default();
            let roles = roles.remove(&agent).unwrap_or_default();
            ActorRoles { agent, name, roles }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub flow: NodeId,
    pub boundary: Boundary,
}

/// Flows of the pipeline that cross a boundary, in timestamp order.
pub fn boundary_crossings(graph: &ProvGraph, pipeline: &Pipeline) -> Vec<Crossing> {
    pipeline
        .flows
        .iter()
        .filter_map(|id| graph.get_flow(id).ok())
        .filter(|f| f.boundary != Boundary::None)
        .map(|f| Crossing { flow: f.id.clone(), boundary: f.boundary })
        .collect()
}

/// Logs an investigation as an activity that used the roots of the given
/// pipelines, so reviews are themselves reviewable.
pub fn record_investigation(log: &mut ProvLog, description: &str, pipelines: &[&Pipeline]) -> Result<NodeId> {
    let Some(now) = log.graph().max_timestamp() else {
        return Err(crate::error::Error::InvalidPayload("cannot record an investigation of an empty log".into()));
    };
    let directions: Vec<&str> = pipelines.iter().map(|p| p.direction.name()).collect();
    let activity = log.append(Draft::Node {
        kind: NodeKind::Activity,
        timestamp: now,
        attrs: attrs([
            ("type", "investigation".to_owned()),
            ("query", description.to_owned()),
            ("directions", directions.join(",")),
        ]),
    })?;
    let roots: BTreeSet<&NodeId> = pipelines.iter().map(|p| &p.root).collect();
    for root in roots {
        log.append(Draft::relation(RelKind::Used, &activity, root, now))?;
    }
    Ok(activity)
}

//! The three lines of inquiry into the incident, answered from the log.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use decprov_core::query::{actors_involved, record_investigation, trace_back, trace_forward, ActorRoles, TraceOptions};
use decprov_core::records::model_cards;
use decprov_core::{AttrValue, NodeId, NodeKind, ProvGraph, ProvLog, ProvNode, RelKind, Timestamp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thread {
    Driver,
    Lighting,
    Ambulance,
}

impl Thread {
    pub const ALL: [Thread; 3] = [Thread::Driver, Thread::Lighting, Thread::Ambulance];

    pub fn name(self) -> &'static str {
        match self {
            Thread::Driver => "driver",
            Thread::Lighting => "lighting",
            Thread::Ambulance => "ambulance",
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            Thread::Driver => "why did the vehicle not brake for the pedestrian?",
            Thread::Lighting => "why were the street lights dimmed?",
            Thread::Ambulance => "why was the ambulance redirected away from the area?",
        }
    }
}

impl fmt::Display for Thread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Thread {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Thread::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| SimError::UnknownThread(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseKind {
    /// A deployed model older than a release documented before the decision.
    StaleModel,
    /// The process that installed a stale model.
    UpdateProcess,
    /// A software release whose outputs were corrupted.
    DefectiveUpdate,
    /// A scheduled process that did not run.
    ProcessGap,
    /// Readings taken with a calibration offset.
    SensorBias,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cause {
    pub node: NodeId,
    pub label: String,
    pub kind: CauseKind,
    pub agents: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Findings {
    pub thread: Thread,
    pub question: String,
    pub root: NodeId,
    pub root_label: String,
    pub outcome: String,
    pub traced_nodes: usize,
    pub actors: Vec<ActorRoles>,
    pub causes: Vec<Cause>,
    /// Names of the agents behind the causes.
    pub responsible: Vec<String>,
    /// The investigation activity appended to the log.
    pub investigation: NodeId,
}

impl Findings {
    pub fn cause_ids(&self) -> BTreeSet<NodeId> {
        self.causes.iter().map(|c| c.node.clone()).collect()
    }
}

/// When the emergency call came in, if one is logged.
pub fn incident_time(graph: &ProvGraph) -> Option<Timestamp> {
    graph.nodes().filter(|n| n.attr_str("category") == Some("emergency_call")).map(|n| n.timestamp).min()
}

/// The thread's decision in force at the incident: the latest one at or
/// before the emergency call, or the latest overall without a call.
pub fn thread_root(graph: &ProvGraph, thread: Thread) -> Result<NodeId> {
    let cutoff = incident_time(graph);
    graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Activity && n.attr_str("type") == Some("decision"))
        .filter(|n| n.attr_str("thread") == Some(thread.name()))
        .filter(|n| cutoff.is_none_or(|c| n.timestamp <= c))
        .map(|n| (n.timestamp, n.id.clone()))
        .max()
        .map(|(_, id)| id)
        .ok_or_else(|| SimError::NoDecision(thread.name().to_owned()))
}

/// Agent names, each followed by the organisation it belongs to.
fn names(graph: &ProvGraph, agents: &[NodeId]) -> Vec<String> {
    let mut out = Vec::new();
    for node in agents.iter().filter_map(|a| graph.get_node(a).ok()) {
        out.push(node.display_name().to_owned());
        if let Some(org) = node.attr_str("org") {
            out.push(org.to_owned());
        }
    }
    out.dedup();
    out
}

/// Agents behind a node: its own, else those of the activity that made it.
fn responsible(graph: &ProvGraph, node: &ProvNode) -> Vec<String> {
    let own = graph.agents_of(&node.id);
    if !own.is_empty() {
        return names(graph, &own);
    }
    let makers: Vec<NodeId> = graph
        .relations_from(&node.id)
        .filter(|r| r.rel == RelKind::Generated)
        .flat_map(|r| graph.agents_of(&r.dst))
        .collect();
    names(graph, &graph.sort_ids(makers))
}

fn version_of(node: &ProvNode) -> Option<u64> {
    node.attr("version").and_then(AttrValue::as_u64)
}

/// Software releases whose forward trace holds corrupted outputs.
pub fn defective_updates(graph: &ProvGraph) -> Result<Vec<NodeId>> {
    let mut out = Vec::new();
    for n in graph.nodes().filter(|n| n.attr_str("category") == Some("software_update")) {
        let fwd = trace_forward(graph, &n.id, TraceOptions::default())?;
        if fwd.nodes.iter().any(|id| graph.get_node(id).is_ok_and(|m| m.attr_bool("corrupted") == Some(true))) {
            out.push(n.id.clone());
        }
    }
    Ok(out)
}

fn push_cause(causes: &mut Vec<Cause>, graph: &ProvGraph, node: &ProvNode, kind: CauseKind, detail: String) {
    causes.push(Cause {
        node: node.id.clone(),
        label: node.display_name().to_owned(),
        kind,
        agents: responsible(graph, node),
        detail,
    });
}

/// Anomalies among the upstream nodes of `root`, in `(timestamp, id)` order.
pub fn find_causes(graph: &ProvGraph, root: &NodeId) -> Result<Vec<Cause>> {
    let back = trace_back(graph, root, TraceOptions::default())?;
    let decided_at = graph.get_node(root)?.timestamp;
    let inside: BTreeSet<&NodeId> = back.nodes.iter().collect();
    let mut causes = Vec::new();
    for id in &back.nodes {
        let node = graph.get_node(id)?;
        if node.kind != NodeKind::Entity {
            continue;
        }
        match node.attr_str("category") {
            Some("model_deployment") => {
                let (Some(name), Some(version)) = (node.attr_str("model_name"), version_of(node)) else { continue };
                let newer = model_cards(graph)
                    .filter(|(card, c)| {
                        card.attr_str("model_name") == Some(name)
                            && u64::from(c.version) > version
                            && card.timestamp <= decided_at
                    })
                    .map(|(_, c)| c.version)
                    .max();
                if let Some(latest) = newer {
                    let detail = format!("{name} version {version} in use while version {latest} was documented");
                    let mut agents = responsible(graph, node);
                    for r in graph.relations_from(id).filter(|r| r.rel == RelKind::DerivedFrom) {
                        if graph.get_node(&r.dst)?.attr_str("category") == Some("model") {
                            agents.extend(names(graph, &graph.agents_of(&r.dst)));
                        }
                    }
                    causes.push(Cause {
                        node: node.id.clone(),
                        label: node.display_name().to_owned(),
                        kind: CauseKind::StaleModel,
                        agents,
                        detail,
                    });
                    for r in graph.relations_from(id).filter(|r| r.rel == RelKind::Generated && inside.contains(&r.dst))
                    {
                        let process = graph.get_node(&r.dst)?;
                        let how = process.attr_str("mode").unwrap_or("unknown");
                        let by = process.attr_str("initiated_by").unwrap_or("unknown");
                        push_cause(
                            &mut causes,
                            graph,
                            process,
                            CauseKind::UpdateProcess,
                            format!("{how} update initiated by {by}"),
                        );
                    }
                }
            }
            Some("software_update") => {
                let fwd = trace_forward(graph, id, TraceOptions::default())?;
                let corrupted = fwd
                    .nodes
                    .iter()
                    .filter(|d| inside.contains(d))
                    .filter(|d| graph.get_node(d).is_ok_and(|m| m.attr_bool("corrupted") == Some(true)))
                    .count();
                if corrupted > 0 {
                    let v = node.attr("version").map(ToString::to_string).unwrap_or_default();
                    push_cause(
                        &mut causes,
                        graph,
                        node,
                        CauseKind::DefectiveUpdate,
                        format!("release {v} produced {corrupted} corrupted input(s) to this decision"),
                    );
                }
            }
            _ => {}
        }
        if node.attr_bool("gap") == Some(true) {
            let process = node.attr_str("process").unwrap_or("process");
            push_cause(
                &mut causes,
                graph,
                node,
                CauseKind::ProcessGap,
                format!("{process} was due but not carried out"),
            );
        }
        if let Some(offset) = node.attr("calibration_offset").and_then(AttrValue::as_f64) {
            if offset != 0.0 {
                push_cause(&mut causes, graph, node, CauseKind::SensorBias, format!("reading offset by {offset}"));
            }
        }
    }
    let order = graph.sort_ids(causes.iter().map(|c| c.node.clone()));
    causes.sort_by_key(|c| order.iter().position(|id| *id == c.node));
    causes.dedup_by(|a, b| a.node == b.node);
    Ok(causes)
}

/// Follows one line of inquiry and records the investigation in the log.
pub fn investigate(log: &mut ProvLog, thread: &str) -> Result<Findings> {
    let thread: Thread = thread.parse()?;
    let graph = log.snapshot();
    let root = thread_root(&graph, thread)?;
    let node = graph.get_node(&root)?;
    let back = trace_back(&graph, &root, TraceOptions::default())?;
    let causes = find_causes(&graph, &root)?;
    let mut responsible: Vec<String> = causes.iter().flat_map(|c| c.agents.iter().cloned()).collect();
    responsible.sort();
    responsible.dedup();
    let investigation = record_investigation(log, thread.question(), &[&back])?;
    Ok(Findings {
        thread,
        question: thread.question().to_owned(),
        root: root.clone(),
        root_label: node.display_name().to_owned(),
        outcome: node.attr_str("action").unwrap_or("unknown").to_owned(),
        traced_nodes: back.nodes.len(),
        actors: actors_involved(&graph, &back),
        causes,
        responsible,
        investigation,
    })
}

/// Nodes worth jumping to in a scenario log.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmarks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lighting: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambulance: Option<NodeId>,
    pub defective_updates: Vec<NodeId>,
}

pub fn landmarks(graph: &ProvGraph) -> Result<Landmarks> {
    let incident =
        graph.nodes().filter(|n| n.attr_str("category") == Some("emergency_call")).map(|n| n.id.clone()).next();
    Ok(Landmarks {
        incident,
        driver: thread_root(graph, Thread::Driver).ok(),
        lighting: thread_root(graph, Thread::Lighting).ok(),
        ambulance: thread_root(graph, Thread::Ambulance).ok(),
        defective_updates: defective_updates(graph)?,
    })
}

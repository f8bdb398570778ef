//! Plain-text renderings for `--format text`.

use std::fmt::Write;

use decprov_core::query::{ActorRoles, Pipeline};
use decprov_core::records::Art30Record;
use decprov_core::{NodeId, ProvGraph};
use decprov_sim::{Findings, Landmarks};

use crate::commands::FlowView;

fn name(graph: &ProvGraph, id: &NodeId) -> String {
    graph.get_node(id).map(|n| n.display_name().to_owned()).unwrap_or_else(|_| id.to_string())
}

fn roles(a: &ActorRoles) -> String {
    a.roles.iter().map(|r| r.name()).collect::<Vec<_>>().join(", ")
}

pub fn pipeline(graph: &ProvGraph, p: &Pipeline) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} trace from {} ({})", p.direction.name(), p.root, name(graph, &p.root));
    let _ = writeln!(out, "{} nodes, {} edges, {} flows", p.nodes.len(), p.edges.len(), p.flows.len());
    let _ = writeln!(out, "immediate:");
    for id in &p.immediate {
        let _ = writeln!(out, "  {id}  {}", name(graph, id));
    }
    let _ = writeln!(out, "nodes:");
    for id in &p.nodes {
        let Ok(n) = graph.get_node(id) else { continue };
        let _ = writeln!(out, "  {id}  {}  {:<8}  {}", n.timestamp, n.kind.to_string(), n.display_name());
    }
    let _ = writeln!(out, "actors:");
    for id in &p.actors {
        let _ = writeln!(out, "  {id}  {}", name(graph, id));
    }
    out
}

pub fn actors(actors: &[ActorRoles]) -> String {
    actors.iter().map(|a| format!("{}  {}  [{}]\n", a.agent, a.name, roles(a))).collect()
}

pub fn flows(flows: &[FlowView]) -> String {
    flows
        .iter()
        .map(|f| {
            let category = f.category.as_deref().unwrap_or("-");
            format!("{}  {}  {} -> {}  {}  {category}\n", f.id, f.timestamp, f.from, f.to, f.boundary)
        })
        .collect()
}

pub fn art30(r: &Art30Record) -> String {
    let mut out = String::new();
    let c = &r.controller.value;
    let _ = writeln!(out, "Record of processing: {} ({})", c.name, c.agent);
    for (k, v) in &c.contact {
        let _ = writeln!(out, "  {k}: {v}");
    }
    for (group, fields) in r.field_groups() {
        let _ = writeln!(out, "{}:", group.replace('_', " "));
        for f in fields {
            let _ = writeln!(out, "  {}  ({} source records)", f.value, f.sources.len());
        }
    }
    if !r.processors.is_empty() {
        let _ = writeln!(out, "processors:");
        for p in &r.processors {
            let _ = writeln!(out, "  {}  {}", p.name, p.processing_categories.join(", "));
        }
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out.push('\n');
    out
}

pub fn landmarks(graph: &ProvGraph, l: &Landmarks, records: usize) -> String {
    let mut out = format!("{records} records\n");
    let rows =
        [("incident", &l.incident), ("driver", &l.driver), ("lighting", &l.lighting), ("ambulance", &l.ambulance)];
    for (k, v) in rows {
        if let Some(id) = v {
            let _ = writeln!(out, "{k:<10} {id}  {}", name(graph, id));
        }
    }
    for id in &l.defective_updates {
        let _ = writeln!(out, "{:<10} {id}  {}", "defective", name(graph, id));
    }
    out
}

pub fn findings(f: &Findings) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[{}] {}", f.thread, f.question);
    let _ = writeln!(out, "decision {} ({}) -> {}", f.root, f.root_label, f.outcome);
    let _ = writeln!(out, "{} upstream records, {} actors", f.traced_nodes, f.actors.len());
    if f.causes.is_empty() {
        let _ = writeln!(out, "no anomalies found upstream");
    }
    for c in &f.causes {
        let _ = writeln!(out, "  {}  {}  {}", c.node, c.label, c.detail);
        let _ = writeln!(out, "      by {}", c.agents.join(", "));
    }
    if !f.responsible.is_empty() {
        let _ = writeln!(out, "responsible: {}", f.responsible.join(", "));
    }
    let _ = writeln!(out, "recorded as {}\n", f.investigation);
    out
}

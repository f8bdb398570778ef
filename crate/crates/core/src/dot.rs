//! Graphviz DOT rendering of pipelines.

use std::fmt::Write;

use crate::graph::ProvGraph;
use crate::model::{NodeKind, RelKind};
use crate::query::Pipeline;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders the pipeline's nodes, lineage edges, actors and flows.
///
/// Entities are ellipses, activities boxes and agents houses; flows are
/// dashed agent-to-agent edges labelled with the entity and boundary.
pub fn pipeline_to_dot(graph: &ProvGraph, pipeline: &Pipeline) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&format!("{} {}", pipeline.direction.name(), pipeline.root)));
    out.push_str("  rankdir=RL;\n");
    for id in pipeline.nodes.iter().chain(&pipeline.actors) {
        let Ok(node) = graph.get_node(id) else { continue };
        let shape = match node.kind {
            NodeKind::Entity => "ellipse",
            NodeKind::Activity => "box",
            NodeKind::Agent => "house",
        };
        let peripheries = if *id == pipeline.root { ", peripheries=2" } else { "" };
        let label = format!("{}\n{}", node.display_name(), node.timestamp);
        let _ = writeln!(out, "  {} [shape={shape}, label={}{peripheries}];", quote(id.as_str()), quote(&label));
    }
    for id in &pipeline.edges {
        if let Ok(r) = graph.get_relation(id) {
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(r.src.as_str()),
                quote(r.dst.as_str()),
                quote(r.rel.name())
            );
        }
    }
    for id in &pipeline.nodes {
        for r in graph.relations_from(id) {
            if matches!(r.rel, RelKind::AttributedTo | RelKind::AssociatedWith) {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label={}, style=dotted];",
                    quote(r.src.as_str()),
                    quote(r.dst.as_str()),
                    quote(r.rel.name())
                );
            }
        }
    }
    for id in &pipeline.flows {
        if let Ok(f) = graph.get_flow(id) {
            let entity = graph.get_node(&f.entity).map(|n| n.display_name().to_owned()).unwrap_or_default();
            let label = format!("{entity} ({})", f.boundary);
            let _ = writeln!(
                out,
                "  {} -> {} [label={}, style=dashed];",
                quote(f.from_agent.as_str()),
                quote(f.to_agent.as_str()),
                quote(&label)
            );
        }
    }
    out.push_str("}\n");
    out
}

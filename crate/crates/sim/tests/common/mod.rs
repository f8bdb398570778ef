#![allow(dead_code)]

use std::collections::BTreeSet;

use decprov_core::{NodeId, ProvGraph, RelKind};
use decprov_sim::{bundled_policy, bundled_rules, run_scenario, RunOutput, ScenarioSpec, FAULT_ATTR};

pub fn run(spec: &ScenarioSpec) -> RunOutput {
    run_scenario(spec, &bundled_policy(), Some(&bundled_rules())).expect("scenario runs")
}

pub fn clean(spec: &ScenarioSpec) -> ScenarioSpec {
    let mut out = spec.clone();
    out.faults.clear();
    out
}

/// Fixpoint over every lineage relation until nothing new is reached.
/// `upstream` follows src -> dst, otherwise dst -> src.
pub fn closure(graph: &ProvGraph, root: &NodeId, upstream: bool) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([root.clone()]);
    loop {
        let before = seen.len();
        for r in graph.relations() {
            if !matches!(r.rel, RelKind::Used | RelKind::Generated | RelKind::DerivedFrom) {
                continue;
            }
            let (from, to) = if upstream { (&r.src, &r.dst) } else { (&r.dst, &r.src) };
            if seen.contains(from) && !seen.contains(to) {
                seen.insert(to.clone());
            }
        }
        if seen.len() == before {
            return seen;
        }
    }
}

/// Strict ancestors of `root` that carry a fault tag.
pub fn tagged_ancestors(graph: &ProvGraph, root: &NodeId) -> BTreeSet<NodeId> {
    closure(graph, root, true)
        .into_iter()
        .filter(|id| id != root)
        .filter(|id| graph.get_node(id).is_ok_and(|n| n.attr(FAULT_ATTR).is_some()))
        .collect()
}

pub fn label(graph: &ProvGraph, id: &NodeId) -> String {
    graph.get_node(id).unwrap().display_name().to_owned()
}

//! Legal and engineering artifacts built from the log: records of
//! processing (GDPR Art. 30), datasheets, model cards and audit reports.
//!
//! Artifacts are derived from attrs the emitters put on nodes:
//!
//! * agents: `name`, `org` (owning organisation of a device or service),
//!   `role` (`controller`), `contact`, `dpo`, `security_measures`,
//!   `recipient_category`, `processor_for`;
//! * activities: `purpose`;
//! * entities: `category`, `data_subjects`, `personal_data` (comma
//!   separated lists allowed).
//!
//! Every exported value carries the ids of the nodes it came from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::attrs::{AttrValue, Attrs};
use crate::compliance::logged_decisions;
use crate::error::{Error, Result};
use crate::graph::ProvGraph;
use crate::log::{LoadedLog, ProvLog};
use crate::model::{Draft, NodeId, NodeKind, ProvNode, RelKind};
use crate::query::{
    actors_involved, boundary_crossings, trace_back, trace_forward, ActorRoles, Pipeline, TraceOptions,
};
use crate::time::Timestamp;

/// A value with the ids of the nodes it was derived from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sourced<T> {
    pub value: T,
    pub sources: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerInfo {
    pub agent: NodeId,
    pub name: String,
    pub contact: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessorEntry {
    pub agent: NodeId,
    pub name: String,
    pub contact: BTreeMap<String, String>,
    pub processing_categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub security_measures: Option<String>,
    pub sources: Vec<NodeId>,
}

/// Record of processing activities for one controller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Art30Record {
    pub controller: Sourced<ControllerInfo>,
    pub purposes: Vec<Sourced<String>>,
    pub data_subject_categories: Vec<Sourced<String>>,
    pub personal_data_categories: Vec<Sourced<String>>,
    pub recipient_categories: Vec<Sourced<String>>,
    pub security_measures: Vec<Sourced<String>>,
    pub processors: Vec<ProcessorEntry>,
    pub warnings: Vec<String>,
}

impl Art30Record {
    /// The five field groups by name, for completeness checks.
    pub fn field_groups(&self) -> [(&'static str, &[Sourced<String>]); 5] {
        [
            ("purposes", &self.purposes),
            ("data_subject_categories", &self.data_subject_categories),
            ("personal_data_categories", &self.personal_data_categories),
            ("recipient_categories", &self.recipient_categories),
            ("security_measures", &self.security_measures),
        ]
    }
}

const CONTACT_KEYS: [&str; 3] = ["contact", "dpo", "representative"];

fn contact_of(node: &ProvNode) -> BTreeMap<String, String> {
    CONTACT_KEYS.iter().filter_map(|k| node.attr_str(k).map(|v| ((*k).to_owned(), v.to_owned()))).collect()
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty())
}

#[derive(Default)]
struct Collector(BTreeMap<String, BTreeSet<NodeId>>);

impl Collector {
    fn add(&mut self, value: &str, sources: &[&NodeId]) {
        let set = self.0.entry(value.to_owned()).or_default();
        set.extend(sources.iter().map(|s| (*s).clone()));
    }

    fn finish(self, graph: &ProvGraph) -> Vec<Sourced<String>> {
        self.0.into_iter().map(|(value, sources)| Sourced { value, sources: graph.sort_ids(sources) }).collect()
    }
}

/// The controller and the agents it runs (those whose `org` names it).
fn scope_agents(graph: &ProvGraph, controller: &ProvNode) -> BTreeSet<NodeId> {
    let name = controller.attr_str("name").unwrap_or(controller.id.as_str());
    let mut scope: BTreeSet<NodeId> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Agent && n.attr_str("org") == Some(name))
        .map(|n| n.id.clone())
        .collect();
    scope.insert(controller.id.clone());
    scope
}

fn recipient_category<'a>(graph: &'a ProvGraph, agent: &'a ProvNode) -> (&'a str, Vec<&'a NodeId>) {
    if let Some(c) = agent.attr_str("recipient_category") {
        return (c, vec![&agent.id]);
    }
    if let Some(org) = agent.attr_str("org").and_then(|o| graph.find_by_attr("name", o)) {
        if let Some(c) = org.attr_str("recipient_category") {
            return (c, vec![&agent.id, &org.id]);
        }
    }
    (agent.display_name(), vec![&agent.id])
}

/// Builds the record of processing for `controller` (an agent id).
pub fn export_art30(graph: &ProvGraph, controller: &NodeId) -> Result<Art30Record> {
    let ctrl = graph.get_node(controller)?;
    if ctrl.kind != NodeKind::Agent {
        return Err(Error::KindMismatch {
            context: "export_art30".into(),
            id: controller.clone(),
            expected: "agent".into(),
            found: ctrl.kind.name().into(),
        });
    }
    let scope = scope_agents(graph, ctrl);
    let mut in_scope: BTreeSet<NodeId> = BTreeSet::new();
    for r in graph.relations() {
        if matches!(r.rel, RelKind::AttributedTo | RelKind::AssociatedWith) && scope.contains(&r.dst) {
            in_scope.insert(r.src.clone());
        }
    }
    // Entities used by the controller's activities are processed by it too.
    let used: Vec<NodeId> = in_scope
        .iter()
        .flat_map(|id| graph.relations_from(id))
        .filter(|r| r.rel == RelKind::Used)
        .map(|r| r.dst.clone())
        .collect();
    in_scope.extend(used);

    let mut purposes = Collector::default();
    let mut subjects = Collector::default();
    let mut personal = Collector::default();
    for id in &in_scope {
        let node = graph.get_node(id)?;
        if let Some(p) = node.attr_str("purpose") {
            purposes.add(p, &[id]);
        }
        for v in node.attr_str("data_subjects").into_iter().flat_map(split_list) {
            subjects.add(v, &[id]);
        }
        for v in node.attr_str("personal_data").into_iter().flat_map(split_list) {
            personal.add(v, &[id]);
        }
    }

    let mut recipients = Collector::default();
    for f in graph.flows() {
        if !scope.contains(&f.from_agent) || scope.contains(&f.to_agent) {
            continue;
        }
        let to = graph.get_node(&f.to_agent)?;
        let (category, mut sources) = recipient_category(graph, to);
        sources.push(&f.id);
        recipients.add(category, &sources);
    }

    let mut security = Collector::default();
    for id in &scope {
        let node = graph.get_node(id)?;
        if let Some(m) = node.attr_str("security_measures") {
            security.add(m, &[id]);
        }
    }

    let ctrl_name = ctrl.attr_str("name").unwrap_or(ctrl.id.as_str());
    let mut processors = Vec::new();
    for agent in graph.nodes().filter(|n| n.kind == NodeKind::Agent) {
        let serves = agent.attr_str("processor_for").is_some_and(|v| split_list(v).any(|c| c == ctrl_name));
        if !serves {
            continue;
        }
        let mut categories = BTreeSet::new();
        let mut sources = vec![agent.id.clone()];
        for r in graph.relations_to(&agent.id).filter(|r| r.rel == RelKind::AssociatedWith) {
            if let Some(p) = graph.get_node(&r.src)?.attr_str("purpose") {
                categories.insert(p.to_owned());
                sources.push(r.src.clone());
            }
        }
        processors.push(ProcessorEntry {
            agent: agent.id.clone(),
            name: agent.display_name().to_owned(),
            contact: contact_of(agent),
            processing_categories: categories.into_iter().collect(),
            security_measures: agent.attr_str("security_measures").map(str::to_owned),
            sources: graph.sort_ids(sources),
        });
    }

    let mut record = Art30Record {
        controller: Sourced {
            value: ControllerInfo {
                agent: ctrl.id.clone(),
                name: ctrl.display_name().to_owned(),
                contact: contact_of(ctrl),
            },
            sources: vec![ctrl.id.clone()],
        },
        purposes: purposes.finish(graph),
        data_subject_categories: subjects.finish(graph),
        personal_data_categories: personal.finish(graph),
        recipient_categories: recipients.finish(graph),
        security_measures: security.finish(graph),
        processors,
        warnings: Vec::new(),
    };
    let empty: Vec<&str> = record.field_groups().iter().filter(|(_, v)| v.is_empty()).map(|(k, _)| *k).collect();
    record.warnings = empty.into_iter().map(|k| format!("incomplete: no {k} recorded for {ctrl_name}")).collect();
    Ok(record)
}

/// Documentation of how a dataset came to be.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datasheet {
    pub dataset: NodeId,
    pub collection_method: String,
    /// Activities that pre-processed the data.
    pub preprocessing: Vec<NodeId>,
    pub legal_basis: String,
    pub known_biases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub condition: String,
    pub accuracy: f64,
}

/// Documentation of a trained model release.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model: NodeId,
    pub intended_context: String,
    pub version: u32,
    pub last_updated: Timestamp,
    pub benchmarks: Vec<Benchmark>,
}

impl ModelCard {
    pub fn accuracy(&self, condition: &str) -> Option<f64> {
        self.benchmarks.iter().find(|b| b.condition == condition).map(|b| b.accuracy)
    }
}

fn require_category(graph: &ProvGraph, id: &NodeId, expected: &str) -> Result<()> {
    let node = graph.get_node(id)?;
    let found = node.attr_str("category");
    if node.kind != NodeKind::Entity || found != Some(expected) {
        return Err(Error::CategoryMismatch {
            id: id.clone(),
            expected: expected.into(),
            found: found.map(str::to_owned),
        });
    }
    Ok(())
}

fn attach(log: &mut ProvLog, target: &NodeId, at: Timestamp, attrs: Attrs) -> Result<NodeId> {
    let id = log.append(Draft::entity(at, attrs))?;
    log.append(Draft::relation(RelKind::DerivedFrom, &id, target, at))?;
    Ok(id)
}

/// Stores `sheet` as an entity derived from its dataset.
pub fn attach_datasheet(log: &mut ProvLog, sheet: &Datasheet, at: Timestamp) -> Result<NodeId> {
    require_category(log.graph(), &sheet.dataset, "dataset")?;
    for p in &sheet.preprocessing {
        let node = log.graph().get_node(p)?;
        if node.kind != NodeKind::Activity {
            return Err(Error::InvalidArtifact(format!("preprocessing step {p} is not an activity")));
        }
    }
    let mut a = Attrs::new();
    a.insert("category".into(), "datasheet".into());
    a.insert("dataset".into(), sheet.dataset.as_str().into());
    a.insert("collection_method".into(), sheet.collection_method.as_str().into());
    a.insert("legal_basis".into(), sheet.legal_basis.as_str().into());
    for (i, p) in sheet.preprocessing.iter().enumerate() {
        a.insert(format!("preprocessing.{i}"), p.as_str().into());
    }
    for (i, b) in sheet.known_biases.iter().enumerate() {
        a.insert(format!("known_bias.{i}"), b.as_str().into());
    }
    attach(log, &sheet.dataset, at, a)
}

/// Name a model's cards are versioned under.
fn model_name(node: &ProvNode) -> String {
    node.attr_str("model").or_else(|| node.attr_str("name")).unwrap_or(node.display_name()).to_owned()
}

/// Stores `card` as an entity derived from its model release. Versions
/// must increase per model name.
pub fn attach_model_card(log: &mut ProvLog, card: &ModelCard, at: Timestamp) -> Result<NodeId> {
    let graph = log.graph();
    require_category(graph, &card.model, "model")?;
    for b in &card.benchmarks {
        if !(0.0..=1.0).contains(&b.accuracy) {
            return Err(Error::InvalidArtifact(format!(
                "accuracy {} for {} is outside [0, 1]",
                b.accuracy, b.condition
            )));
        }
    }
    let name = model_name(graph.get_node(&card.model)?);
    if let Some(latest) = model_cards(graph)
        .filter(|(n, _)| n.attr_str("model_name") == Some(name.as_str()))
        .map(|(_, c)| c.version)
        .max()
    {
        if card.version <= latest {
            return Err(Error::VersionRegression { model: name, version: card.version, latest });
        }
    }
    let mut a = Attrs::new();
    a.insert("category".into(), "model_card".into());
    a.insert("model".into(), card.model.as_str().into());
    a.insert("model_name".into(), name.as_str().into());
    a.insert("intended_context".into(), card.intended_context.as_str().into());
    a.insert("version".into(), card.version.into());
    a.insert("last_updated".into(), card.last_updated.to_string().into());
    for b in &card.benchmarks {
        a.insert(format!("benchmark.{}", b.condition), b.accuracy.into());
    }
    attach(log, &card.model, at, a)
}

fn indexed(node: &ProvNode, prefix: &str) -> Vec<String> {
    let mut items: Vec<(usize, String)> =
        node.attrs.iter().filter_map(|(k, v)| Some((k.strip_prefix(prefix)?.parse().ok()?, v.to_string()))).collect();
    items.sort();
    items.into_iter().map(|(_, v)| v).collect()
}

impl Datasheet {
    pub fn from_node(node: &ProvNode) -> Result<Self> {
        let get = |k: &str| {
            node.attr_str(k)
                .map(str::to_owned)
                .ok_or_else(|| Error::InvalidArtifact(format!("{}: datasheet lacks {k}", node.id)))
        };
        if node.attr_str("category") != Some("datasheet") {
            return Err(Error::CategoryMismatch {
                id: node.id.clone(),
                expected: "datasheet".into(),
                found: node.attr_str("category").map(str::to_owned),
            });
        }
        Ok(Self {
            dataset: NodeId::new(get("dataset")?)?,
            collection_method: get("collection_method")?,
            preprocessing: indexed(node, "preprocessing.").into_iter().map(NodeId::new).collect::<Result<_>>()?,
            legal_basis: get("legal_basis")?,
            known_biases: indexed(node, "known_bias."),
        })
    }
}

impl ModelCard {
    pub fn from_node(node: &ProvNode) -> Result<Self> {
        let bad = |k: &str| Error::InvalidArtifact(format!("{}: model card lacks {k}", node.id));
        if node.attr_str("category") != Some("model_card") {
            return Err(Error::CategoryMismatch {
                id: node.id.clone(),
                expected: "model_card".into(),
                found: node.attr_str("category").map(str::to_owned),
            });
        }
        let version = node.attr("version").and_then(AttrValue::as_u64).ok_or_else(|| bad("version"))?;
        let benchmarks = node
            .attrs
            .iter()
            .filter_map(|(k, v)| {
                Some(Benchmark { condition: k.strip_prefix("benchmark.")?.to_owned(), accuracy: v.as_f64()? })
            })
            .collect();
        Ok(Self {
            model: NodeId::new(node.attr_str("model").ok_or_else(|| bad("model"))?)?,
            intended_context: node.attr_str("intended_context").unwrap_or_default().to_owned(),
            version: u32::try_from(version).map_err(|_| bad("a 32-bit version"))?,
            last_updated: Timestamp::parse(node.attr_str("last_updated").ok_or_else(|| bad("last_updated"))?)?,
            benchmarks,
        })
    }
}

/// All stored model cards with their nodes, in log order.
pub fn model_cards(graph: &ProvGraph) -> impl Iterator<Item = (&ProvNode, ModelCard)> {
    graph
        .nodes()
        .filter(|n| n.attr_str("category") == Some("model_card"))
        .filter_map(|n| ModelCard::from_node(n).ok().map(|c| (n, c)))
}

/// All stored datasheets with their nodes, in log order.
pub fn datasheets(graph: &ProvGraph) -> impl Iterator<Item = (&ProvNode, Datasheet)> {
    graph
        .nodes()
        .filter(|n| n.attr_str("category") == Some("datasheet"))
        .filter_map(|n| Datasheet::from_node(n).ok().map(|d| (n, d)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    Regulator,
    Developer,
    User,
}

impl Audience {
    pub fn name(self) -> &'static str {
        match self {
            Audience::Regulator => "regulator",
            Audience::Developer => "developer",
            Audience::User => "user",
        }
    }

    /// How the report is rendered for this audience.
    pub fn rendering_level(self) -> &'static str {
        match self {
            Audience::Regulator => "structured-summary",
            Audience::Developer => "full-detail",
            Audience::User => "plain-language",
        }
    }
}

impl std::str::FromStr for Audience {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regulator" => Ok(Audience::Regulator),
            "developer" => Ok(Audience::Developer),
            "user" => Ok(Audience::User),
            _ => Err(Error::InvalidPayload(format!("unknown audience {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub audience: Audience,
    /// Upper bound on included/total; exceeding it raises a warning.
    pub proportion_cap: f64,
}

impl ReportOptions {
    pub fn new(audience: Audience) -> Self {
        Self { audience, proportion_cap: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    /// The log's hash chain verified.
    pub chain_verified: bool,
    /// Records that could not be indexed while loading.
    pub unreadable_records: usize,
    /// Included records that resolve in the log.
    pub resolved_records: usize,
    pub accurate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub included: usize,
    pub total: usize,
    pub ratio: f64,
    pub cap: f64,
    pub exceeds_cap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Share of the traced records kept for the audience.
    pub relevant: f64,
    pub accurate: Accuracy,
    pub proportionate: Proportion,
    pub comprehensible: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub item: String,
    pub status: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingView {
    pub flow: NodeId,
    pub timestamp: Timestamp,
    pub from: String,
    pub to: String,
    pub boundary: crate::model::Boundary,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub audience: Audience,
    pub root: NodeId,
    /// Backward and forward pipelines; omitted for users.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pipelines: Vec<Pipeline>,
    pub actors: Vec<ActorRoles>,
    pub categories: Vec<String>,
    pub crossings: Vec<CrossingView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compliance_decisions: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub art30: Vec<Art30Record>,
    /// Ids of every record the report discloses.
    pub records: Vec<NodeId>,
    pub metrics: Metrics,
    pub checklist: Vec<ChecklistItem>,
    pub warnings: Vec<String>,
}

/// Renders the report about `root` for an audience. Works on logs whose
/// chain does not verify; `metrics.accurate` then says so.
pub fn render_report(loaded: &LoadedLog, root: &NodeId, opts: ReportOptions) -> Result<AuditReport> {
    let graph = &*loaded.graph;
    graph.get_node(root)?;
    let back = trace_back(graph, root, TraceOptions::default())?;
    let fwd = trace_forward(graph, root, TraceOptions::default())?;

    let mut actors: BTreeMap<NodeId, ActorRoles> = BTreeMap::new();
    for a in actors_involved(graph, &back).into_iter().chain(actors_involved(graph, &fwd)) {
        actors.entry(a.agent.clone()).and_modify(|m| m.roles.extend(a.roles.iter().copied())).or_insert(a);
    }
    let actors: Vec<ActorRoles> =
        graph.sort_ids(actors.keys().cloned()).into_iter().filter_map(|id| actors.remove(&id)).collect();

    let mut traced: BTreeSet<NodeId> = BTreeSet::new();
    for p in [&back, &fwd] {
        traced.extend(p.nodes.iter().chain(&p.edges).chain(&p.flows).chain(&p.actors).cloned());
    }
    traced.extend(actors.iter().map(|a| a.agent.clone()));

    let name = |id: &NodeId| graph.get_node(id).map(|n| n.display_name().to_owned()).unwrap_or_else(|_| id.to_string());
    let category_of = |id: &NodeId| {
        graph.get_node(id).ok().and_then(|n| n.attr_str("category")).unwrap_or("uncategorised").to_owned()
    };

    let mut crossing_ids = BTreeSet::new();
    let mut crossings = Vec::new();
    for p in [&back, &fwd] {
        for c in boundary_crossings(graph, p) {
            if crossing_ids.insert(c.flow.clone()) {
                let f = graph.get_flow(&c.flow)?;
                crossings.push(CrossingView {
                    flow: f.id.clone(),
                    timestamp: f.timestamp,
                    from: name(&f.from_agent),
                    to: name(&f.to_agent),
                    boundary: f.boundary,
                    category: category_of(&f.entity),
                });
            }
        }
    }
    crossings.sort_by(|a, b| (a.timestamp, &a.flow).cmp(&(b.timestamp, &b.flow)));

    let categories: BTreeSet<String> = back
        .nodes
        .iter()
        .chain(&fwd.nodes)
        .filter(|id| graph.get_node(id).is_ok_and(|n| n.kind == NodeKind::Entity))
        .map(category_of)
        .collect();

    let trace_nodes: BTreeSet<&NodeId> = back.nodes.iter().chain(&fwd.nodes).collect();
    let decisions: Vec<NodeId> = logged_decisions(graph)
        .filter(|d| graph.relations_from(&d.id).any(|r| trace_nodes.contains(&r.dst)))
        .map(|d| d.id.clone())
        .collect();

    let audience = opts.audience;
    let mut records: BTreeSet<NodeId> = BTreeSet::new();
    let mut pipelines = Vec::new();
    let mut art30 = Vec::new();
    let mut compliance_decisions = Vec::new();
    match audience {
        Audience::User => {
            records.extend(actors.iter().map(|a| a.agent.clone()));
            records.extend(crossing_ids.iter().cloned());
        }
        Audience::Developer | Audience::Regulator => {
            records.extend(traced.iter().cloned());
            pipelines = vec![back.clone(), fwd.clone()];
        }
    }
    if audience == Audience::Regulator {
        compliance_decisions = decisions.clone();
        records.extend(decisions.iter().cloned());
        for a in &actors {
            if graph.get_node(&a.agent)?.attr_str("role") == Some("controller") {
                art30.push(export_art30(graph, &a.agent)?);
            }
        }
    }

    let total = graph.len().max(loaded.integrity.records);
    let included = records.len();
    let ratio = if total == 0 { 0.0 } else { included as f64 / total as f64 };
    let denominator = traced.len() + decisions.len();
    let relevant = if denominator == 0 { 0.0 } else { included as f64 / denominator as f64 };
    let resolved_records = records.iter().filter(|id| graph.contains(id)).count();
    let accurate = Accuracy {
        chain_verified: loaded.integrity.ok,
        unreadable_records: loaded.skipped.len(),
        resolved_records,
        accurate: loaded.integrity.ok && loaded.skipped.is_empty() && resolved_records == included,
    };
    let proportionate =
        Proportion { included, total, ratio, cap: opts.proportion_cap, exceeds_cap: ratio > opts.proportion_cap };

    let mut warnings = Vec::new();
    if !accurate.chain_verified {
        let at = loaded.integrity.first_bad_index.map(|i| format!(" at record {i}")).unwrap_or_default();
        warnings.push(format!("log integrity check failed{at}; contents may have been altered"));
    }
    if proportionate.exceeds_cap {
        warnings
            .push(format!("report discloses {included} of {total} records, above the cap of {}", opts.proportion_cap));
    }
    for r in &art30 {
        warnings.extend(r.warnings.iter().cloned());
    }

    Ok(AuditReport {
        audience,
        root: root.clone(),
        pipelines,
        actors,
        categories: categories.into_iter().collect(),
        crossings,
        compliance_decisions,
        art30,
        records: graph.sort_ids(records),
        metrics: Metrics { relevant, accurate, proportionate, comprehensible: audience.rendering_level().to_owned() },
        checklist: vec![ChecklistItem {
            item: "representative".into(),
            status: "manual review required".into(),
            note: "check that the recorded data reflects the conditions the system actually operated in".into(),
        }],
        warnings,
    })
}

impl AuditReport {
    /// Deterministic plain-text rendering.
    pub fn render_text(&self, graph: &ProvGraph) -> String {
        let name =
            |id: &NodeId| graph.get_node(id).map(|n| n.display_name().to_owned()).unwrap_or_else(|_| id.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "AUDIT REPORT ({} audience)", self.audience.name());
        if self.audience == Audience::User {
            let _ = writeln!(
                out,
                "About a decision recorded at {}",
                graph.get(&self.root).map(|p| p.timestamp().to_string()).unwrap_or_default()
            );
        } else {
            let _ = writeln!(out, "Root: {} {}", self.root, name(&self.root));
        }
        out.push('\n');

        out.push_str("Who was involved:\n");
        for a in &self.actors {
            let roles: Vec<&str> = a.roles.iter().map(|r| r.name()).collect();
            let _ = writeln!(out, "  {} ({})", a.name, roles.join(", "));
        }
        out.push_str("\nKinds of data:\n");
        for c in &self.categories {
            let _ = writeln!(out, "  {c}");
        }
        out.push_str("\nWhere data crossed boundaries:\n");
        for c in &self.crossings {
            let _ = writeln!(out, "  {}  {} -> {} ({}, {})", c.timestamp, c.from, c.to, c.boundary, c.category);
        }

        for p in &self.pipelines {
            let _ = writeln!(
                out,
                "\n{} trace ({} nodes, {} edges, {} flows):",
                p.direction.name(),
                p.nodes.len(),
                p.edges.len(),
                p.flows.len()
            );
            for id in &p.nodes {
                let Ok(node) = graph.get_node(id) else { continue };
                let _ = write!(out, "  {}  {}  {:<8}  {}", id, node.timestamp, node.kind.name(), node.display_name());
                if self.audience == Audience::Developer {
                    let attrs: Vec<String> = node
                        .attrs
                        .iter()
                        .filter(|(k, _)| k.as_str() != "label")
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect();
                    if !attrs.is_empty() {
                        let _ = write!(out, "  [{}]", attrs.join(", "));
                    }
                }
                out.push('\n');
            }
        }

        if !self.compliance_decisions.is_empty() {
            out.push_str("\nCompliance decisions:\n");
            for id in &self.compliance_decisions {
                if let Ok(n) = graph.get_node(id) {
                    let _ = writeln!(
                        out,
                        "  {}  {}  {} by rule {} on {}",
                        id,
                        n.timestamp,
                        n.attr_str("reaction").unwrap_or("?"),
                        n.attr_str("rule").unwrap_or("?"),
                        n.attr_str("event").unwrap_or("?")
                    );
                }
            }
        }
        for r in &self.art30 {
            let _ = writeln!(out, "\nRecord of processing: {}", r.controller.value.name);
            for (group, values) in r.field_groups() {
                let vals: Vec<&str> = values.iter().map(|v| v.value.as_str()).collect();
                let _ = writeln!(out, "  {group}: {}", vals.join("; "));
            }
        }

        let m = &self.metrics;
        out.push_str("\nAppropriateness:\n");
        let _ = writeln!(out, "  relevant: {:.3}", m.relevant);
        let _ = writeln!(
            out,
            "  accurate: {} (chain verified: {}, {} of {} records resolved)",
            m.accurate.accurate, m.accurate.chain_verified, m.accurate.resolved_records, m.proportionate.included
        );
        let _ = writeln!(
            out,
            "  proportionate: {}/{} = {:.4} (cap {})",
            m.proportionate.included, m.proportionate.total, m.proportionate.ratio, m.proportionate.cap
        );
        let _ = writeln!(out, "  comprehensible: {}", m.comprehensible);
        out.push_str("\nChecklist:\n");
        for c in &self.checklist {
            let _ = writeln!(out, "  [ ] {}: {} ({})", c.item, c.status, c.note);
        }
        if !self.warnings.is_empty() {
            out.push_str("\nWarnings:\n");
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }
}

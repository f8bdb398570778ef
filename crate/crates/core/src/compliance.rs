//! Reactive compliance rules over flow events and uses of data.
//!
//! Rules are evaluated first-match-wins, like capture rules. A trigger is a
//! conjunction of optional patterns over the event plus three flags that,
//! when set, require the event to be an unexpected flow (absent from the
//! whitelist), to concern an expired entity, or to concern an entity that
//! came from or through an unreliable agent. Every decision other than
//! Allow is written back to the log as an activity, so reactions can be
//! reviewed like anything else.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attrs::{attrs, AttrValue, Attrs};
use crate::error::{Error, Result};
use crate::glob::glob_match;
use crate::graph::ProvGraph;
use crate::log::ProvLog;
use crate::model::{Boundary, Draft, FlowEvent, NodeId, NodeKind, RelKind};
use crate::query::{
    actors_involved, boundary_crossings, trace_back, trace_forward, ActorRoles, Crossing, Pipeline, TraceOptions,
};
use crate::time::Timestamp;

/// Attr holding an entity's expiry instant.
pub const EXPIRY_ATTR: &str = "expiry";
/// Agent attr that, when false, marks the agent unreliable.
pub const RELIABLE_ATTR: &str = "reliable";
/// `type` attr of logged decisions.
pub const DECISION_TYPE: &str = "compliance_decision";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn name(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlertSpec {
    pub severity: Severity,
    pub recipient: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reaction {
    Allow,
    Block,
    FilterEntity,
    Quarantine,
    Alert(AlertSpec),
}

impl Reaction {
    pub fn name(&self) -> &'static str {
        match self {
            Reaction::Allow => "allow",
            Reaction::Block => "block",
            Reaction::FilterEntity => "filter_entity",
            Reaction::Quarantine => "quarantine",
            Reaction::Alert(_) => "alert",
        }
    }

    /// Whether the event's data may be acted on.
    pub fn admits(&self) -> bool {
        matches!(self, Reaction::Allow | Reaction::Alert(_))
    }
}

impl fmt::Display for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Conjunction of conditions; absent fields and false flags always hold.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    /// Pattern over the entity's `category` attr.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Entity attr key -> value pattern; the key must be present.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    /// Pattern over the sending agent's id or name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_agent: Option<String>,
    /// Pattern over the receiving agent's id or name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unexpected_flow: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub expired: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unreliable_source: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceRule {
    pub id: String,
    #[serde(default)]
    pub trigger: Trigger,
    pub reaction: Reaction,
    /// Alert raised alongside a non-alert reaction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert: Option<AlertSpec>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// An allowed `(from, to, category)` flow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowPattern {
    pub from_agent: String,
    pub to_agent: String,
    pub category: String,
}

/// Rules file contents: rules, expected-flow whitelist (absent or null
/// disables whitelist checks) and agents to treat as unreliable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default)]
    pub rules: Vec<ComplianceRule>,
    #[serde(default)]
    pub whitelist: Option<Vec<FlowPattern>>,
    #[serde(default)]
    pub unreliable_agents: Vec<String>,
}

/// What the rules see of an event.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventFacts {
    pub entity_attrs: BTreeMap<String, String>,
    /// Ids and names of the sending side.
    pub from: Vec<String>,
    /// Ids and names of the receiving side.
    pub to: Vec<String>,
    pub boundary: Option<Boundary>,
    pub unexpected: bool,
    pub expired: bool,
    pub unreliable: bool,
}

impl EventFacts {
    pub fn category(&self) -> &str {
        self.entity_attrs.get("category").map(String::as_str).unwrap_or("")
    }
}

fn any_match(pattern: &str, names: &[String]) -> Result<bool> {
    for n in names {
        if glob_match(pattern, n)? {
            return Ok(true);
        }
    }
    Ok(false)
}

impl Trigger {
    pub fn fires(&self, facts: &EventFacts) -> Result<bool> {
        if let Some(p) = &self.category {
            if !glob_match(p, facts.category())? || !facts.entity_attrs.contains_key("category") {
                return Ok(false);
            }
        }
        for (k, p) in &self.attrs {
            match facts.entity_attrs.get(k) {
                Some(v) if glob_match(p, v)? => {}
                _ => return Ok(false),
            }
        }
        if let Some(p) = &self.from_agent {
            if !any_match(p, &facts.from)? {
                return Ok(false);
            }
        }
        if let Some(p) = &self.to_agent {
            if !any_match(p, &facts.to)? {
                return Ok(false);
            }
        }
        if self.boundary.is_some() && self.boundary != facts.boundary {
            return Ok(false);
        }
        Ok((!self.unexpected_flow || facts.unexpected)
            && (!self.expired || facts.expired)
            && (!self.unreliable_source || facts.unreliable))
    }

    fn patterns(&self) -> impl Iterator<Item = &String> {
        self.category.iter().chain(self.attrs.values()).chain(&self.from_agent).chain(&self.to_agent)
    }
}

impl FlowPattern {
    pub fn allows(&self, facts: &EventFacts) -> Result<bool> {
        Ok(any_match(&self.from_agent, &facts.from)?
            && any_match(&self.to_agent, &facts.to)?
            && glob_match(&self.category, facts.category())?)
    }
}

/// What happened to one event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// The flow event, or the entity whose use was checked.
    pub event: NodeId,
    /// The activity about to use the entity, for use checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<NodeId>,
    /// Rule that fired; absent for the implicit Allow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    pub reaction: Reaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert: Option<AlertSpec>,
    pub timestamp: Timestamp,
    /// The activity recording the decision, when logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logged_as: Option<NodeId>,
}

impl RuleSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for rule in &self.rules {
            if rule.id.is_empty() || !ids.insert(rule.id.as_str()) {
                return Err(Error::MalformedRule(format!("rule id {:?} is empty or repeated", rule.id)));
            }
            for p in rule.trigger.patterns() {
                glob_match(p, "").map_err(|_| Error::MalformedRule(format!("{}: bad pattern {p:?}", rule.id)))?;
            }
            if rule.reaction == Reaction::Allow && rule.trigger.unexpected_flow {
                return Err(Error::MalformedRule(format!(
                    "{}: an allow rule cannot require an unexpected flow",
                    rule.id
                )));
            }
            let alerts = rule.alert.iter().chain(match &rule.reaction {
                Reaction::Alert(a) => Some(a),
                _ => None,
            });
            for a in alerts {
                if a.recipient.is_empty() {
                    return Err(Error::MalformedRule(format!("{}: alert without recipient", rule.id)));
                }
            }
        }
        for p in self.whitelist.iter().flatten() {
            for s in [&p.from_agent, &p.to_agent, &p.category] {
                glob_match(s, "").map_err(|_| Error::MalformedRule(format!("whitelist: bad pattern {s:?}")))?;
            }
        }
        Ok(())
    }

    /// Index of the first rule whose trigger fires.
    pub fn first_match(&self, facts: &EventFacts) -> Result<Option<usize>> {
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.trigger.fires(facts)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// Whether a flow with these facts is outside the whitelist. Always
    /// false when the whitelist is disabled.
    pub fn is_unexpected(&self, facts: &EventFacts) -> Result<bool> {
        let Some(list) = &self.whitelist else { return Ok(false) };
        for p in list {
            if p.allows(facts)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn is_unreliable_agent(&self, graph: &ProvGraph, agent: &NodeId) -> bool {
        let Ok(node) = graph.get_node(agent) else { return false };
        node.attr_bool(RELIABLE_ATTR) == Some(false)
            || self.unreliable_agents.iter().any(|u| u == agent.as_str() || Some(u.as_str()) == node.attr_str("name"))
    }

    /// Unreliable agents found among the actors of the entity's backward
    /// trace, in `(timestamp, id)` order.
    pub fn unreliable_sources(&self, graph: &ProvGraph, entity: &NodeId) -> Result<Vec<NodeId>> {
        let back = trace_back(graph, entity, TraceOptions::default())?;
        Ok(actors_involved(graph, &back)
            .into_iter()
            .map(|a| a.agent)
            .filter(|a| self.is_unreliable_agent(graph, a))
            .collect())
    }

    fn facts_for_entity(&self, graph: &ProvGraph, entity: &NodeId, now: Timestamp) -> Result<EventFacts> {
        let node = graph.get_node(entity)?;
        let entity_attrs = node.attrs.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        let expired = match node.attr_str(EXPIRY_ATTR) {
            Some(t) => now > Timestamp::parse(t)?,
            None => false,
        };
        let unreliable = !self.unreliable_sources(graph, entity)?.is_empty();
        Ok(EventFacts { entity_attrs, expired, unreliable, ..Default::default() })
    }

    /// Facts of a flow event.
    pub fn flow_facts(&self, graph: &ProvGraph, flow: &FlowEvent, now: Timestamp) -> Result<EventFacts> {
        let mut facts = self.facts_for_entity(graph, &flow.entity, now)?;
        facts.from = agent_names(graph, std::slice::from_ref(&flow.from_agent));
        facts.to = agent_names(graph, std::slice::from_ref(&flow.to_agent));
        facts.boundary = Some(flow.boundary);
        facts.unreliable |= self.is_unreliable_agent(graph, &flow.from_agent);
        facts.unexpected = self.is_unexpected(&facts)?;
        Ok(facts)
    }

    /// Facts of `activity` using `entity`: the sender side is the entity's
    /// attributed agents, the receiver side the activity's associated ones.
    pub fn use_facts(
        &self,
        graph: &ProvGraph,
        activity: &NodeId,
        entity: &NodeId,
        now: Timestamp,
    ) -> Result<EventFacts> {
        let mut facts = self.facts_for_entity(graph, entity, now)?;
        facts.from = agent_names(graph, &graph.agents_of(entity));
        facts.to = agent_names(graph, &graph.agents_of(activity));
        Ok(facts)
    }

    fn decide(&self, facts: &EventFacts, event: &NodeId, activity: Option<&NodeId>, at: Timestamp) -> Result<Decision> {
        let (rule, reaction, alert) = match self.first_match(facts)? {
            Some(i) => {
                let r = &self.rules[i];
                let alert = match &r.reaction {
                    Reaction::Alert(a) => Some(a.clone()),
                    _ => r.alert.clone(),
                };
                (Some(r.id.clone()), r.reaction.clone(), alert)
            }
            None => (None, Reaction::Allow, None),
        };
        Ok(Decision {
            event: event.clone(),
            activity: activity.cloned(),
            rule,
            reaction,
            alert,
            timestamp: at,
            logged_as: None,
        })
    }

    /// Decision for a flow without logging it.
    pub fn evaluate_flow(&self, graph: &ProvGraph, flow: &NodeId, now: Timestamp) -> Result<Decision> {
        let f = graph.get_flow(flow)?;
        let facts = self.flow_facts(graph, f, now)?;
        self.decide(&facts, flow, None, now.max(f.timestamp))
    }

    /// Decision for `activity` using `entity` without logging it.
    pub fn evaluate_use(
        &self,
        graph: &ProvGraph,
        activity: &NodeId,
        entity: &NodeId,
        now: Timestamp,
    ) -> Result<Decision> {
        let facts = self.use_facts(graph, activity, entity, now)?;
        let t = graph.get_node(entity)?.timestamp;
        self.decide(&facts, entity, Some(activity), now.max(t))
    }
}

fn agent_names(graph: &ProvGraph, agents: &[NodeId]) -> Vec<String> {
    let mut out = Vec::new();
    for a in agents {
        out.push(a.to_string());
        if let Some(name) = graph.get_node(a).ok().and_then(|n| n.attr_str("name")) {
            out.push(name.to_owned());
        }
    }
    out
}

/// Logs a non-Allow decision as an activity that used the entity concerned.
fn log_decision(log: &mut ProvLog, decision: &mut Decision, entity: &NodeId) -> Result<()> {
    if decision.reaction == Reaction::Allow {
        return Ok(());
    }
    let entity_time = log.graph().get_node(entity)?.timestamp;
    let at = decision.timestamp.max(entity_time);
    let mut a: Attrs =
        attrs([("type", DECISION_TYPE), ("reaction", decision.reaction.name()), ("event", decision.event.as_str())]);
    if let Some(rule) = &decision.rule {
        a.insert("rule".into(), rule.as_str().into());
    }
    if let Some(activity) = &decision.activity {
        a.insert("activity".into(), activity.as_str().into());
    }
    if let Some(alert) = &decision.alert {
        a.insert("severity".into(), alert.severity.name().into());
        a.insert("recipient".into(), AttrValue::from(alert.recipient.as_str()));
    }
    let id = log.append(Draft::activity(at, a))?;
    log.append(Draft::relation(RelKind::Used, &id, entity, at))?;
    decision.timestamp = at;
    decision.logged_as = Some(id);
    Ok(())
}

/// Checks a logged flow event; non-Allow decisions are logged.
pub fn check_flow(log: &mut ProvLog, rules: &RuleSet, flow: &NodeId, now: Timestamp) -> Result<Decision> {
    let mut decision = rules.evaluate_flow(log.graph(), flow, now)?;
    let entity = log.graph().get_flow(flow)?.entity.clone();
    log_decision(log, &mut decision, &entity)?;
    Ok(decision)
}

/// Outcome of checking an activity's inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UseCheck {
    /// One decision per input, in input order.
    pub decisions: Vec<Decision>,
    /// Inputs the activity may use.
    pub admitted: Vec<NodeId>,
}

/// Checks each input `activity` is about to use. Filtered, quarantined and
/// blocked inputs are left out of `admitted`; non-Allow decisions are logged.
pub fn check_use(
    log: &mut ProvLog,
    rules: &RuleSet,
    activity: &NodeId,
    inputs: &[NodeId],
    now: Timestamp,
) -> Result<UseCheck> {
    let node = log.graph().get_node(activity)?;
    if node.kind != NodeKind::Activity {
        return Err(Error::KindMismatch {
            context: "check_use".into(),
            id: activity.clone(),
            expected: "activity".into(),
            found: node.kind.name().into(),
        });
    }
    let mut decisions = Vec::with_capacity(inputs.len());
    let mut admitted = Vec::new();
    for entity in inputs {
        let mut d = rules.evaluate_use(log.graph(), activity, entity, now)?;
        log_decision(log, &mut d, entity)?;
        if d.reaction.admits() {
            admitted.push(entity.clone());
        }
        decisions.push(d);
    }
    Ok(UseCheck { decisions, admitted })
}

/// Logged compliance decisions, in log order.
pub fn logged_decisions(graph: &ProvGraph) -> impl Iterator<Item = &crate::model::ProvNode> {
    graph.nodes().filter(|n| n.kind == NodeKind::Activity && n.attr_str("type") == Some(DECISION_TYPE))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRef {
    pub agent: NodeId,
    pub name: String,
}

/// Everything known about an incident, for notification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreachReport {
    pub incident: NodeId,
    pub incident_name: String,
    pub recipient: String,
    pub backward: Pipeline,
    pub forward: Pipeline,
    /// Union of the actors of both traces with merged roles.
    pub actors: Vec<ActorRoles>,
    pub crossings: Vec<Crossing>,
    /// Agents that received data derived from the incident.
    pub affected_recipients: Vec<AgentRef>,
    pub alert: Decision,
}

/// Builds a breach report for `incident` and logs the alert to `recipient`.
pub fn breach_report(log: &mut ProvLog, incident: &NodeId, recipient: &str) -> Result<BreachReport> {
    let graph = log.snapshot();
    let incident_name = graph.get_node(incident)?.display_name().to_owned();
    let backward = trace_back(&graph, incident, TraceOptions::default())?;
    let forward = trace_forward(&graph, incident, TraceOptions::default())?;

    let mut merged: BTreeMap<NodeId, ActorRoles> = BTreeMap::new();
    for a in actors_involved(&graph, &backward).into_iter().chain(actors_involved(&graph, &forward)) {
        merged.entry(a.agent.clone()).and_modify(|m| m.roles.extend(a.roles.iter().copied())).or_insert(a);
    }
    let actors = graph.sort_ids(merged.keys().cloned()).into_iter().filter_map(|id| merged.remove(&id)).collect();

    let mut crossings = boundary_crossings(&graph, &backward);
    for c in boundary_crossings(&graph, &forward) {
        if !crossings.contains(&c) {
            crossings.push(c);
        }
    }
    let order: Vec<NodeId> = graph.sort_ids(crossings.iter().map(|c| c.flow.clone()));
    crossings.sort_by_key(|c| order.iter().position(|id| *id == c.flow));

    let recipients =
        graph.sort_ids(forward.flows.iter().filter_map(|f| graph.get_flow(f).ok()).map(|f| f.to_agent.clone()));
    let affected_recipients = recipients
        .into_iter()
        .map(|agent| {
            let name = graph.get_node(&agent).map(|n| n.display_name().to_owned()).unwrap_or_default();
            AgentRef { agent, name }
        })
        .collect();

    let now = graph.max_timestamp().unwrap_or(Timestamp::from_millis(0));
    let mut alert = Decision {
        event: incident.clone(),
        activity: None,
        rule: Some("breach-report".into()),
        reaction: Reaction::Alert(AlertSpec { severity: Severity::High, recipient: recipient.to_owned() }),
        alert: Some(AlertSpec { severity: Severity::High, recipient: recipient.to_owned() }),
        timestamp: now,
        logged_as: None,
    };
    log_decision(log, &mut alert, incident)?;

    Ok(BreachReport {
        incident: incident.clone(),
        incident_name,
        recipient: recipient.to_owned(),
        backward,
        forward,
        actors,
        crossings,
        affected_recipients,
        alert,
    })
}

impl BreachReport {
    /// Plain-text rendering for the notified authority.
    pub fn render_text(&self, graph: &ProvGraph) -> String {
        let name =
            |id: &NodeId| graph.get_node(id).map(|n| n.display_name().to_owned()).unwrap_or_else(|_| id.to_string());
        let mut out = String::new();
        out.push_str(&format!("BREACH REPORT for {}\n", self.recipient));
        out.push_str(&format!("Incident: {} ({})\n", self.incident_name, self.incident));
        out.push_str(&format!("Raised at: {}\n\n", self.alert.timestamp));
        out.push_str(&format!("Data flows leading to the incident ({} records):\n", self.backward.nodes.len()));
        for id in &self.backward.nodes {
            out.push_str(&format!("  {}  {}\n", id, name(id)));
        }
        out.push_str(&format!("\nData flows from the incident ({} records):\n", self.forward.nodes.len()));
        for id in &self.forward.nodes {
            out.push_str(&format!("  {}  {}\n", id, name(id)));
        }
        out.push_str("\nOrganisations and components involved:\n");
        for a in &self.actors {
            let roles: Vec<&str> = a.roles.iter().map(|r| r.name()).collect();
            out.push_str(&format!("  {}  {} [{}]\n", a.agent, a.name, roles.join(", ")));
        }
        out.push_str("\nBoundary crossings:\n");
        for c in &self.crossings {
            if let Ok(f) = graph.get_flow(&c.flow) {
                out.push_str(&format!(
                    "  {}  {} -> {} ({}) carrying {}\n",
                    f.timestamp,
                    name(&f.from_agent),
                    name(&f.to_agent),
                    c.boundary,
                    name(&f.entity)
                ));
            }
        }
        out.push_str("\nRecipients of affected data:\n");
        for r in &self.affected_recipients {
            out.push_str(&format!("  {}  {}\n", r.agent, r.name));
        }
        out
    }
}

//! The discrete-event loop: a 1 s virtual clock, a fixed firing order and
//! per-firing random streams, so the same spec and seed always give the
//! same log.

use std::collections::BTreeMap;

use decprov_core::capture::{gate_append, Candidate, CapturePolicy, RawAttr};
use decprov_core::compliance::{check_flow, RuleSet};
use decprov_core::records::{attach_datasheet, attach_model_card, Benchmark, Datasheet, ModelCard};
use decprov_core::{AttrValue, Attrs, Boundary, Draft, NodeId, NodeKind, ProvLog, RelKind, Timestamp};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spec::{Behavior, FaultKind, Instance, ScenarioSpec};

/// Attr naming the fault that made the simulator create a node.
pub const FAULT_ATTR: &str = "fault";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Declaration,
    Emission,
    Activity,
    Decision,
    Flow,
    Compliance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub t_s: i64,
    pub timestamp: Timestamp,
    pub kind: EventKind,
    pub source: String,
    /// The stored record, absent when the capture policy dropped it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub note: String,
}

/// Everything that happened in a run, sorted by `(t_s, seq)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub events: Vec<SimEvent>,
}

impl EventTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events always serialize"));
            out.push('\n');
        }
        out
    }
}

pub struct RunOutput {
    pub log: ProvLog,
    pub trace: EventTrace,
}

/// Runs `spec`, passing every record through `policy` and every flow
/// through `rules` when given.
pub fn run_scenario(spec: &ScenarioSpec, policy: &CapturePolicy, rules: Option<&RuleSet>) -> Result<RunOutput> {
    spec.validate()?;
    let mut engine = Engine::new(spec, policy, rules);
    engine.declare()?;
    for firing in engine.firings() {
        engine.fire(&firing)?;
    }
    Ok(RunOutput { log: engine.log, trace: EventTrace { events: engine.events } })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Mode {
    Normal,
    /// Manual installation standing in for suppressed automatic updates.
    ManualUpdate(usize),
    BadRelease(usize),
    Rollback(usize),
    /// The process was due but did not run.
    Gap(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Firing {
    t: i64,
    inst: usize,
    mode: Mode,
}

/// A datum as the simulated systems see it, whether or not it was logged.
struct Item {
    id: Option<NodeId>,
    values: Attrs,
    /// Simulator-only state: model benchmarks, release defects.
    hidden: Attrs,
    defective: bool,
}

impl Item {
    fn num(&self, key: &str) -> f64 {
        self.values.get(key).or_else(|| self.hidden.get(key)).and_then(AttrValue::as_f64).unwrap_or(0.0)
    }

    fn flag(&self, key: &str) -> bool {
        self.values.get(key).and_then(AttrValue::as_bool).unwrap_or(false)
    }

    fn text(&self, key: &str) -> &str {
        self.values.get(key).and_then(AttrValue::as_str).unwrap_or("")
    }
}

struct Engine<'a> {
    spec: &'a ScenarioSpec,
    policy: &'a CapturePolicy,
    rules: Option<&'a RuleSet>,
    log: ProvLog,
    events: Vec<SimEvent>,
    instances: Vec<Instance>,
    agents: Vec<Option<NodeId>>,
    items: Vec<Item>,
    inbox: BTreeMap<(usize, String), Vec<(usize, usize)>>,
    /// `(producer instance, category)` -> `(consumer instance, boundary)`.
    routes: BTreeMap<(usize, String), Vec<(usize, Boundary)>>,
    street_light: f64,
    /// Per software-release instance: last sound release item.
    stable_release: BTreeMap<usize, usize>,
    bad_release: BTreeMap<usize, usize>,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn num(x: f64) -> AttrValue {
    AttrValue::from(round3(x))
}

impl<'a> Engine<'a> {
    fn new(spec: &'a ScenarioSpec, policy: &'a CapturePolicy, rules: Option<&'a RuleSet>) -> Self {
        let instances = spec.instances();
        let mut routes: BTreeMap<(usize, String), Vec<(usize, Boundary)>> = BTreeMap::new();
        for d in &spec.dependencies {
            for (p, prod) in instances.iter().enumerate() {
                if spec.components[prod.component].name != d.producer {
                    continue;
                }
                for (c, cons) in instances.iter().enumerate() {
                    let pa = &spec.agents[prod.agent].name;
                    let ca = &spec.agents[cons.agent].name;
                    if spec.components[cons.component].name == d.consumer && d.link.admits(pa, ca) {
                        routes.entry((p, d.category.clone())).or_default().push((c, d.boundary));
                    }
                }
            }
        }
        let bright = spec
            .components
            .iter()
            .find_map(|c| match c.behavior {
                Behavior::LightingControl { bright_level, .. } => Some(bright_level),
                _ => None,
            })
            .unwrap_or(1.0);
        Self {
            spec,
            policy,
            rules,
            log: ProvLog::in_memory(),
            events: Vec::new(),
            instances,
            agents: Vec::new(),
            items: Vec::new(),
            inbox: BTreeMap::new(),
            routes,
            street_light: bright,
            stable_release: BTreeMap::new(),
            bad_release: BTreeMap::new(),
        }
    }

    fn ts(&self, t: i64) -> Timestamp {
        self.spec.start.plus_secs(t)
    }

    fn firings(&self) -> Vec<Firing> {
        let horizon = self.spec.horizon_s;
        let mut out = Vec::new();
        for (i, inst) in self.instances.iter().enumerate() {
            let faults: Vec<(usize, &crate::spec::FaultInjection)> =
                self.spec.faults.iter().enumerate().filter(|(_, f)| f.target == inst.name).collect();
            for t in self.spec.components[inst.component].schedule.ticks(horizon) {
                let mut mode = Mode::Normal;
                let mut suppressed = false;
                for (k, f) in &faults {
                    match f.kind {
                        FaultKind::ModelStale { staleness_s } => {
                            suppressed |= f.window.start_s - staleness_s <= t && t <= f.window.end_s;
                        }
                        FaultKind::ProcessSkipped { .. } if f.covers(t) => mode = Mode::Gap(*k),
                        _ => {}
                    }
                }
                if !suppressed {
                    out.push(Firing { t, inst: i, mode });
                }
            }
            if horizon <= 0 {
                continue;
            }
            for (k, f) in faults {
                match f.kind {
                    FaultKind::ModelStale { staleness_s } => {
                        out.push(Firing { t: f.window.start_s - staleness_s, inst: i, mode: Mode::ManualUpdate(k) })
                    }
                    FaultKind::ServiceBadUpdate { .. } => {
                        out.push(Firing { t: f.window.start_s, inst: i, mode: Mode::BadRelease(k) });
                        out.push(Firing { t: f.window.end_s, inst: i, mode: Mode::Rollback(k) });
                    }
                    _ => {}
                }
            }
        }
        out.sort();
        out
    }

    fn declaration_time(&self) -> i64 {
        let earliest = self.firings().first().map_or(0, |f| f.t);
        earliest.min(0)
    }

    fn record(&mut self, t: i64, kind: EventKind, source: &str, node: Option<NodeId>, note: String) {
        let seq = self.events.len() as u64;
        self.events.push(SimEvent { seq, t_s: t, timestamp: self.ts(t), kind, source: source.to_owned(), node, note });
    }

    fn gate(&mut self, candidate: Candidate) -> Result<Option<NodeId>> {
        Ok(gate_append(self.policy, &candidate, &mut self.log)?.appended)
    }

    fn declare(&mut self) -> Result<()> {
        let t = self.declaration_time();
        let at = self.ts(t);
        for a in &self.spec.agents {
            let mut raw: BTreeMap<String, RawAttr> =
                a.attrs.iter().map(|(k, v)| (k.clone(), RawAttr::Plain(v.clone()))).collect();
            raw.insert("name".into(), RawAttr::Plain(a.name.as_str().into()));
            raw.insert("label".into(), RawAttr::Plain(a.name.as_str().into()));
            raw.insert("agent_kind".into(), RawAttr::Plain(a.kind.as_str().into()));
            let id = self.gate(Candidate::node(NodeKind::Agent, at, raw))?;
            self.agents.push(id.clone());
            self.record(t, EventKind::Declaration, &a.name, id, format!("agent {}", a.name));
        }
        for inst in self.instances.clone() {
            let comp = &self.spec.components[inst.component];
            let owner = &self.spec.agents[inst.agent].name;
            let raw: BTreeMap<String, RawAttr> = [
                ("name", inst.name.as_str()),
                ("label", inst.name.as_str()),
                ("agent_kind", "component"),
                ("component_of", owner.as_str()),
                ("behavior", comp.behavior.name()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_owned(), RawAttr::Plain(v.into())))
            .collect();
            let id = self.gate(Candidate::node(NodeKind::Agent, at, raw))?;
            self.record(t, EventKind::Declaration, &inst.name, id, format!("component {}", comp.behavior.name()));
        }
        Ok(())
    }

    fn relate(&mut self, rel: RelKind, src: &Option<NodeId>, dst: &Option<NodeId>, t: i64) -> Result<()> {
        if let (Some(s), Some(d)) = (src, dst) {
            let at = self.ts(t);
            self.gate(Candidate::from(Draft::relation(rel, s, d, at)))?;
        }
        Ok(())
    }

    fn base_attrs(&self, inst: usize, label: String) -> BTreeMap<String, RawAttr> {
        let i = &self.instances[inst];
        let mut raw = BTreeMap::new();
        raw.insert("label".to_owned(), RawAttr::Plain(label.into()));
        raw.insert("agent".to_owned(), RawAttr::Plain(self.spec.agents[i.agent].name.as_str().into()));
        raw.insert("component".to_owned(), RawAttr::Plain(self.spec.components[i.component].name.as_str().into()));
        raw
    }

    /// Records an activity of `inst` that used `inputs`.
    fn activity(
        &mut self,
        inst: usize,
        t: i64,
        suffix: Option<&str>,
        extra: Attrs,
        inputs: &[usize],
    ) -> Result<Option<NodeId>> {
        let name = self.instances[inst].name.clone();
        let label = match suffix {
            Some(s) => format!("{name}@{t}s/{s}"),
            None => format!("{name}@{t}s"),
        };
        let mut raw = self.base_attrs(inst, label);
        let comp = &self.spec.components[self.instances[inst].component];
        for (k, v) in comp.attrs.iter().chain(extra.iter()) {
            raw.insert(k.clone(), RawAttr::Plain(v.clone()));
        }
        let decision = extra.contains_key("thread");
        let note = extra.get("action").map(|a| a.to_string()).unwrap_or_else(|| comp.behavior.name().to_owned());
        let id = self.gate(Candidate::node(NodeKind::Activity, self.ts(t), raw))?;
        let agent = self.agents[self.instances[inst].agent].clone();
        self.relate(RelKind::AssociatedWith, &id, &agent, t)?;
        for &item in inputs {
            let input = self.items[item].id.clone();
            self.relate(RelKind::Used, &id, &input, t)?;
        }
        let kind = if decision { EventKind::Decision } else { EventKind::Activity };
        self.record(t, kind, &name, id.clone(), note);
        Ok(id)
    }

    /// Records an entity emitted by `inst` and delivers it downstream.
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        inst: usize,
        t: i64,
        category: &str,
        values: Attrs,
        tagged: BTreeMap<String, RawAttr>,
        generated_by: &Option<NodeId>,
        derived_from: &[usize],
    ) -> Result<usize> {
        let item = self.store(inst, t, category, values, tagged, generated_by, derived_from)?;
        self.deliver(inst, item, category, t)?;
        Ok(item)
    }

    /// Records an entity without delivering it.
    #[allow(clippy::too_many_arguments)]
    fn store(
        &mut self,
        inst: usize,
        t: i64,
        category: &str,
        values: Attrs,
        tagged: BTreeMap<String, RawAttr>,
        generated_by: &Option<NodeId>,
        derived_from: &[usize],
    ) -> Result<usize> {
        let name = self.instances[inst].name.clone();
        let mut raw = self.base_attrs(inst, format!("{name}@{t}s:{category}"));
        raw.insert("category".into(), RawAttr::Plain(category.into()));
        let comp = &self.spec.components[self.instances[inst].component];
        for (k, v) in comp.output_attrs.iter().chain(values.iter()) {
            raw.insert(k.clone(), RawAttr::Plain(v.clone()));
        }
        raw.extend(tagged);
        let id = self.gate(Candidate::node(NodeKind::Entity, self.ts(t), raw))?;
        let agent = self.agents[self.instances[inst].agent].clone();
        self.relate(RelKind::AttributedTo, &id, &agent, t)?;
        self.relate(RelKind::Generated, &id, generated_by, t)?;
        for &src in derived_from {
            let s = self.items[src].id.clone();
            self.relate(RelKind::DerivedFrom, &id, &s, t)?;
        }
        self.record(t, EventKind::Emission, &name, id.clone(), category.to_owned());
        self.items.push(Item { id, values, hidden: Attrs::new(), defective: false });
        Ok(self.items.len() - 1)
    }

    fn deliver(&mut self, producer: usize, item: usize, category: &str, t: i64) -> Result<()> {
        let Some(targets) = self.routes.get(&(producer, category.to_owned())).cloned() else {
            return Ok(());
        };
        let from = self.instances[producer].agent;
        // One flow per receiving agent, shared by its consuming components.
        let mut admitted: BTreeMap<usize, bool> = BTreeMap::new();
        for (consumer, boundary) in targets {
            let to = self.instances[consumer].agent;
            let ok = if from == to {
                true
            } else if let Some(&ok) = admitted.get(&to) {
                ok
            } else {
                let ok = self.flow(producer, item, from, to, boundary, t)?;
                admitted.insert(to, ok);
                ok
            };
            if ok {
                self.inbox.entry((consumer, category.to_owned())).or_default().push((producer, item));
            }
        }
        Ok(())
    }

    fn flow(
        &mut self,
        producer: usize,
        item: usize,
        from: usize,
        to: usize,
        boundary: Boundary,
        t: i64,
    ) -> Result<bool> {
        let (Some(entity), Some(f), Some(g)) =
            (self.items[item].id.clone(), self.agents[from].clone(), self.agents[to].clone())
        else {
            return Ok(true);
        };
        let at = self.ts(t);
        let id = self.gate(Candidate::from(Draft::flow(&entity, &f, &g, boundary, at)))?;
        let source = self.instances[producer].name.clone();
        let note = format!("{} -> {} ({boundary})", self.spec.agents[from].name, self.spec.agents[to].name);
        self.record(t, EventKind::Flow, &source, id.clone(), note);
        let (Some(id), Some(rules)) = (id, self.rules) else {
            return Ok(true);
        };
        let decision = check_flow(&mut self.log, rules, &id, at)?;
        if let Some(logged) = decision.logged_as.clone() {
            self.record(t, EventKind::Compliance, &source, Some(logged), decision.reaction.name().to_owned());
        }
        Ok(decision.reaction.admits())
    }

    fn latest(&self, inst: usize, category: &str) -> Option<usize> {
        self.inbox.get(&(inst, category.to_owned())).and_then(|v| v.last()).map(|&(_, item)| item)
    }

    /// Latest item from each producer, in producer order.
    fn latest_per_producer(&self, inst: usize, category: &str) -> Vec<usize> {
        let mut last: BTreeMap<usize, usize> = BTreeMap::new();
        for &(p, item) in self.inbox.get(&(inst, category.to_owned())).into_iter().flatten() {
            last.insert(p, item);
        }
        last.into_values().collect()
    }

    fn rng(&self, inst: usize, t: i64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(inst as u64);
        rng.set_word_pos(((t as i128 + (1i128 << 40)) as u128) * 16);
        rng
    }

    /// Offset applied to a sensor reading at `t`, with the fault's tag.
    fn bias(&self, inst: usize, t: i64) -> Option<(f64, &'static str)> {
        let name = &self.instances[inst].name;
        self.spec.faults.iter().filter(|f| &f.target == name && f.covers(t)).find_map(|f| match f.kind {
            FaultKind::SensorBias { offset } => Some((offset, f.kind.tag())),
            _ => None,
        })
    }

    fn fire(&mut self, firing: &Firing) -> Result<()> {
        let Firing { t, inst, mode } = *firing;
        let agent_name = self.spec.agents[self.instances[inst].agent].name.clone();
        let behavior = self.spec.components[self.instances[inst].component].behavior.clone();
        let mut rng = self.rng(inst, t);
        let none = Attrs::new;
        let untagged = BTreeMap::new;

        if let Mode::Gap(k) = mode {
            let fault = &self.spec.faults[k];
            let FaultKind::ProcessSkipped { process } = &fault.kind else {
                unreachable!("gaps come from skipped processes")
            };
            let mut values = Attrs::new();
            values.insert("gap".into(), true.into());
            values.insert("process".into(), process.as_str().into());
            values.insert("scheduled_at".into(), self.ts(t).to_string().into());
            values.insert(FAULT_ATTR.into(), fault.kind.tag().into());
            let item = self.store(inst, t, "process_gap", values, untagged(), &None, &[])?;
            if let Some(route) = output_category(&behavior) {
                self.deliver(inst, item, route, t)?;
            }
            return Ok(());
        }

        match behavior {
            Behavior::Dataset { records, datasheet } => {
                let mut steps = Vec::new();
                if let Some(sheet) = &datasheet {
                    for step in &sheet.preprocessing {
                        let extra = attrs_of([("step", step.as_str().into())]);
                        steps.push(self.activity(inst, t, Some(step), extra, &[])?);
                    }
                }
                let values = attrs_of([("records", records.into())]);
                let generated = steps.last().cloned().flatten();
                let item = self.emit(inst, t, "dataset", values, untagged(), &generated, &[])?;
                for s in &steps[..steps.len().saturating_sub(1)] {
                    let id = self.items[item].id.clone();
                    self.relate(RelKind::Generated, &id, s, t)?;
                }
                if let (Some(sheet), Some(dataset)) = (datasheet, self.items[item].id.clone()) {
                    if self.admits_artifact(t, "datasheet")? {
                        let ds = Datasheet {
                            dataset,
                            collection_method: sheet.collection_method,
                            preprocessing: steps.into_iter().flatten().collect(),
                            legal_basis: sheet.legal_basis,
                            known_biases: sheet.known_biases,
                        };
                        let at = self.ts(t);
                        let id = attach_datasheet(&mut self.log, &ds, at)?;
                        self.record(
                            t,
                            EventKind::Emission,
                            &self.instances[inst].name.clone(),
                            Some(id),
                            "datasheet".into(),
                        );
                    }
                }
            }
            Behavior::ModelRelease { model, version, intended_context, benchmarks } => {
                let data = self.latest(inst, "dataset");
                let extra = attrs_of([("model", model.as_str().into()), ("version", version.into())]);
                let act = self.activity(inst, t, None, extra, data.as_slice())?;
                let values = attrs_of([("model", model.as_str().into()), ("version", version.into())]);
                let item = self.store(inst, t, "model", values, untagged(), &act, &[])?;
                for (cond, acc) in &benchmarks {
                    self.items[item].hidden.insert(format!("benchmark.{cond}"), (*acc).into());
                }
                if let (Some(release), true) = (self.items[item].id.clone(), self.admits_artifact(t, "model_card")?) {
                    let card = ModelCard {
                        model: release,
                        intended_context,
                        version,
                        last_updated: self.ts(t),
                        benchmarks: benchmarks
                            .iter()
                            .map(|(c, a)| Benchmark { condition: c.clone(), accuracy: *a })
                            .collect(),
                    };
                    let at = self.ts(t);
                    let id = attach_model_card(&mut self.log, &card, at)?;
                    self.items[item].hidden.insert("card".into(), id.as_str().into());
                    self.record(
                        t,
                        EventKind::Emission,
                        &self.instances[inst].name.clone(),
                        Some(id),
                        "model_card".into(),
                    );
                }
                self.deliver(inst, item, "model", t)?;
            }
            Behavior::ModelUpdate => {
                let Some(release) = self.latest(inst, "model") else { return Ok(()) };
                let manual = matches!(mode, Mode::ManualUpdate(_));
                let mut extra = attrs_of([
                    ("mode", if manual { "manual" } else { "automatic" }.into()),
                    ("initiated_by", if manual { "mechanic" } else { "vehicle" }.into()),
                ]);
                let mut values = attrs_of([
                    ("model_name", self.items[release].text("model").into()),
                    ("version", self.items[release].values["version"].clone()),
                ]);
                if manual {
                    extra.insert(FAULT_ATTR.into(), "model_stale".into());
                    values.insert(FAULT_ATTR.into(), "model_stale".into());
                }
                let act = self.activity(inst, t, None, extra, &[release])?;
                let card = self.items[release]
                    .hidden
                    .get("card")
                    .and_then(AttrValue::as_str)
                    .and_then(|c| NodeId::new(c).ok());
                let item = self.store(inst, t, "model_deployment", values, untagged(), &act, &[release])?;
                let id = self.items[item].id.clone();
                self.relate(RelKind::DerivedFrom, &id, &card, t)?;
                self.items[item].hidden = self.items[release].hidden.clone();
                self.deliver(inst, item, "model_deployment", t)?;
            }
            Behavior::Camera { sentinel } => {
                let mut light = self.street_light + rng.gen_range(-0.03..0.03);
                let mut values = Attrs::new();
                if let Some((offset, tag)) = self.bias(inst, t) {
                    light += offset;
                    values.insert("calibration_offset".into(), num(offset));
                    values.insert(FAULT_ATTR.into(), tag.into());
                }
                values.insert("light".into(), num(light.clamp(0.0, 1.0)));
                let frame = format!("{sentinel}-{agent_name}-{t}");
                let tagged =
                    [("image".to_owned(), RawAttr::Tagged { value: frame.into(), pd: true, payload: true })].into();
                self.emit(inst, t, "camera_frame", values, tagged, &None, &[])?;
            }
            Behavior::ObjectDetection { threshold, low_light_below } => {
                let (Some(frame), Some(model)) =
                    (self.latest(inst, "camera_frame"), self.latest(inst, "model_deployment"))
                else {
                    return Ok(());
                };
                let condition =
                    if self.items[frame].num("light") < low_light_below { "low_light" } else { "normal_light" };
                let accuracy = self.items[model].num(&format!("benchmark.{condition}"));
                let in_view: Vec<&str> = self
                    .spec
                    .hazards
                    .iter()
                    .filter(|h| h.from_s <= t && t <= h.to_s && h.visible_to.contains(&agent_name))
                    .flat_map(|h| h.objects.iter().map(String::as_str))
                    .collect();
                let detected =
                    if accuracy >= threshold && !in_view.is_empty() { in_view.join(",") } else { "none".to_owned() };
                let act = self.activity(inst, t, None, none(), &[frame, model])?;
                let values = attrs_of([
                    ("condition", condition.into()),
                    ("confidence", num(accuracy)),
                    ("detected", detected.into()),
                    ("model_version", self.items[model].values["version"].clone()),
                ]);
                self.emit(inst, t, "detection", values, untagged(), &act, &[])?;
            }
            Behavior::HazardShare => {
                let Some(det) = self.latest(inst, "detection") else { return Ok(()) };
                let values = attrs_of([("hazards", self.items[det].text("detected").into())]);
                self.emit(inst, t, "hazard_report", values, untagged(), &None, &[det])?;
            }
            Behavior::BrakingControl => {
                let Some(own) = self.latest(inst, "detection") else { return Ok(()) };
                let peers = self.latest_per_producer(inst, "hazard_report");
                let hazard = self.items[own].text("detected") != "none"
                    || peers.iter().any(|&p| self.items[p].text("hazards") != "none");
                let action = if hazard { "emergency_brake" } else { "none" };
                let mut inputs = vec![own];
                inputs.extend(&peers);
                let extra = attrs_of([
                    ("type", "decision".into()),
                    ("thread", "driver".into()),
                    ("action", action.into()),
                    ("peer_reports", (peers.len() as u64).into()),
                ]);
                let act = self.activity(inst, t, None, extra, &inputs)?;
                self.emit(inst, t, "braking_command", attrs_of([("action", action.into())]), untagged(), &act, &[])?;
            }
            Behavior::Telemetry { sentinel } => {
                let mut speed = 30.0 + rng.gen_range(-5.0..5.0);
                let mut values = Attrs::new();
                if let Some((offset, tag)) = self.bias(inst, t) {
                    speed += offset;
                    values.insert("calibration_offset".into(), num(offset));
                    values.insert(FAULT_ATTR.into(), tag.into());
                }
                values.insert("speed_kmh".into(), num(speed));
                let pos = format!("{sentinel}-{agent_name}-{t}");
                let tagged =
                    [("position".to_owned(), RawAttr::Tagged { value: pos.into(), pd: true, payload: false })].into();
                self.emit(inst, t, "telemetry", values, tagged, &None, &[])?;
            }
            Behavior::FleetDensity { capacity, low_below } => {
                let reports = self.latest_per_producer(inst, "telemetry");
                if reports.is_empty() {
                    return Ok(());
                }
                let density = reports.len() as f64 / capacity;
                let act = self.activity(inst, t, None, none(), &reports)?;
                let values = attrs_of([
                    ("vehicles", (reports.len() as u64).into()),
                    ("vehicle_density", num(density)),
                    ("level", level(density, low_below).into()),
                ]);
                self.emit(inst, t, "vehicle_density", values, untagged(), &act, &[])?;
            }
            Behavior::LocationPing { sentinel, users_at_full } => {
                let busy = self.spec.busyness_at(t);
                let mut users = (busy * users_at_full * (1.0 + rng.gen_range(-0.05..0.05))).round();
                let mut values = Attrs::new();
                if let Some((offset, tag)) = self.bias(inst, t) {
                    users += offset;
                    values.insert("calibration_offset".into(), num(offset));
                    values.insert(FAULT_ATTR.into(), tag.into());
                }
                values.insert("users".into(), num(users.max(0.0)));
                let pos = format!("{sentinel}-{agent_name}-{t}");
                let tagged =
                    [("positions".to_owned(), RawAttr::Tagged { value: pos.into(), pd: true, payload: true })].into();
                self.emit(inst, t, "location_ping", values, tagged, &None, &[])?;
            }
            Behavior::SoftwareRelease { service, version } => {
                let mut values = attrs_of([("service", service.as_str().into())]);
                let mut derived = Vec::new();
                let mut defective = false;
                match mode {
                    Mode::BadRelease(k) => {
                        let fault = &self.spec.faults[k];
                        let FaultKind::ServiceBadUpdate { version: bad } = &fault.kind else { unreachable!() };
                        values.insert("version".into(), bad.as_str().into());
                        values.insert(FAULT_ATTR.into(), fault.kind.tag().into());
                        defective = true;
                    }
                    Mode::Rollback(_) => {
                        let Some(&bad) = self.bad_release.get(&inst) else { return Ok(()) };
                        let stable = self.stable_release.get(&inst).copied();
                        let restored = stable.map_or(version.clone(), |s| self.items[s].text("version").to_owned());
                        values.insert("version".into(), restored.into());
                        values.insert("rolls_back".into(), self.items[bad].values["version"].clone());
                        derived.push(bad);
                        derived.extend(stable);
                    }
                    _ => {
                        values.insert("version".into(), version.as_str().into());
                    }
                }
                let item = self.store(inst, t, "software_update", values, untagged(), &None, &derived)?;
                self.items[item].defective = defective;
                if defective {
                    self.bad_release.insert(inst, item);
                } else if !matches!(mode, Mode::Rollback(_)) {
                    self.stable_release.insert(inst, item);
                }
                self.deliver(inst, item, "software_update", t)?;
            }
            Behavior::CrowdDensity { users_at_full, low_below } => {
                let Some(pings) = self.latest(inst, "location_ping") else { return Ok(()) };
                let software = self.latest(inst, "software_update");
                let corrupted = software.is_some_and(|s| self.items[s].defective);
                let mut inputs = vec![pings];
                inputs.extend(software);
                let act = self.activity(inst, t, None, none(), &inputs)?;
                let pedestrians =
                    if corrupted { 0.0 } else { (self.items[pings].num("users") / users_at_full).min(1.0) };
                let vehicles = pedestrians * 0.8;
                let mut values = attrs_of([
                    ("pedestrian_density", num(pedestrians)),
                    ("vehicle_density", num(vehicles)),
                    ("congestion", level(pedestrians, low_below).into()),
                ]);
                if let Some(s) = software {
                    values.insert("software_version".into(), self.items[s].values["version"].clone());
                }
                if corrupted {
                    values.insert("corrupted".into(), true.into());
                }
                self.emit(inst, t, "congestion_report", values, untagged(), &act, &[])?;
            }
            Behavior::LightingControl { dim_below, dim_level, bright_level } => {
                let Some(report) = self.latest(inst, "congestion_report") else { return Ok(()) };
                let dim = self.items[report].num("pedestrian_density") < dim_below;
                let (action, brightness) = if dim { ("dim", dim_level) } else { ("bright", bright_level) };
                let extra =
                    attrs_of([("type", "decision".into()), ("thread", "lighting".into()), ("action", action.into())]);
                let act = self.activity(inst, t, None, extra, &[report])?;
                let values = attrs_of([("level", action.into()), ("brightness", num(brightness))]);
                self.emit(inst, t, "lighting_command", values, untagged(), &act, &[])?;
            }
            Behavior::LightActuation => {
                let Some(cmd) = self.latest(inst, "lighting_command") else { return Ok(()) };
                self.street_light = self.items[cmd].num("brightness");
                let extra = attrs_of([("brightness", num(self.street_light))]);
                self.activity(inst, t, None, extra, &[cmd])?;
            }
            Behavior::ResidentReport { sentinel } => {
                let contact = format!("{sentinel}-{t}");
                let tagged =
                    [("contact".to_owned(), RawAttr::Tagged { value: contact.into(), pd: true, payload: false })]
                        .into();
                let item = self.emit(
                    inst,
                    t,
                    "resident_report",
                    attrs_of([("issue", "lamp fault".into())]),
                    tagged,
                    &None,
                    &[],
                )?;
                self.activity(inst, t, Some("maintenance"), none(), &[item])?;
            }
            Behavior::EventListing { event, venue, starts_at } => {
                let values = attrs_of([
                    ("event", event.as_str().into()),
                    ("venue", venue.as_str().into()),
                    ("starts_at", starts_at.as_str().into()),
                ]);
                self.emit(inst, t, "event_listing", values, untagged(), &None, &[])?;
            }
            Behavior::EventAdjustment => {
                let listing = self.latest(inst, "event_listing");
                let act = self.activity(inst, t, None, none(), listing.as_slice())?;
                let event = listing.map_or("none".to_owned(), |l| self.items[l].text("event").to_owned());
                let values = attrs_of([("major_event", event.into()), ("hotspot_boost", listing.is_some().into())]);
                self.emit(inst, t, "event_adjustment", values, untagged(), &act, &[])?;
            }
            Behavior::HistoricSummary { area, baseline_hotspot } => {
                let Some(history) = self.latest(inst, "dataset") else { return Ok(()) };
                let adjustment = self.latest(inst, "event_adjustment");
                let adjusted =
                    adjustment.is_some_and(|a| !self.items[a].flag("gap") && self.items[a].flag("hotspot_boost"));
                let mut inputs = vec![history];
                inputs.extend(adjustment);
                let act = self.activity(inst, t, None, none(), &inputs)?;
                let values = attrs_of([
                    ("area", area.as_str().into()),
                    ("hotspot", (baseline_hotspot || adjusted).into()),
                    ("event_adjusted", adjusted.into()),
                ]);
                self.emit(inst, t, "historic_summary", values, untagged(), &act, &[])?;
            }
            Behavior::RiskPlanning { area } => {
                let (Some(cong), Some(dens), Some(hist)) = (
                    self.latest(inst, "congestion_report"),
                    self.latest(inst, "vehicle_density"),
                    self.latest(inst, "historic_summary"),
                ) else {
                    return Ok(());
                };
                let low = self.items[cong].text("congestion") == "low"
                    && self.items[dens].text("level") == "low"
                    && !self.items[hist].flag("hotspot");
                let (class, action) = if low { ("low_risk", "redirect") } else { ("elevated_risk", "hold") };
                let extra = attrs_of([
                    ("type", "decision".into()),
                    ("thread", "ambulance".into()),
                    ("classification", class.into()),
                    ("action", action.into()),
                    ("area", area.as_str().into()),
                ]);
                let act = self.activity(inst, t, None, extra, &[cong, dens, hist])?;
                let values = attrs_of([("area", area.as_str().into()), ("redirect", low.into())]);
                self.emit(inst, t, "dispatch_plan", values, untagged(), &act, &[])?;
            }
            Behavior::EmergencyCall { sentinel, eta_nearby_s, eta_redirected_s } => {
                let caller = format!("{sentinel}-{t}");
                let tagged =
                    [("caller".to_owned(), RawAttr::Tagged { value: caller.into(), pd: true, payload: false })].into();
                let call = self.emit(
                    inst,
                    t,
                    "emergency_call",
                    attrs_of([("report", "pedestrian struck".into())]),
                    tagged,
                    &None,
                    &[],
                )?;
                let plan = self.latest(inst, "dispatch_plan");
                let redirected = plan.is_some_and(|p| self.items[p].flag("redirect"));
                let mut inputs = vec![call];
                inputs.extend(plan);
                let act = self.activity(inst, t, Some("response"), none(), &inputs)?;
                let eta = if redirected { eta_redirected_s } else { eta_nearby_s };
                self.emit(inst, t, "ambulance_response", attrs_of([("eta_s", eta.into())]), untagged(), &act, &[])?;
            }
        }
        Ok(())
    }

    /// Whether the capture policy lets a documentation artifact through.
    fn admits_artifact(&self, t: i64, category: &str) -> Result<bool> {
        let raw = [("category".to_owned(), RawAttr::Plain(category.into()))].into();
        let subject = Candidate::node(NodeKind::Entity, self.ts(t), raw).subject(Some(self.log.graph()));
        Ok(self.policy.evaluate(&subject)? != decprov_core::capture::CaptureAction::Drop)
    }
}

fn output_category(behavior: &Behavior) -> Option<&'static str> {
    Some(match behavior {
        Behavior::EventAdjustment => "event_adjustment",
        Behavior::HistoricSummary { .. } => "historic_summary",
        Behavior::FleetDensity { .. } => "vehicle_density",
        Behavior::CrowdDensity { .. } => "congestion_report",
        Behavior::LightingControl { .. } => "lighting_command",
        Behavior::RiskPlanning { .. } => "dispatch_plan",
        Behavior::ObjectDetection { .. } => "detection",
        Behavior::HazardShare => "hazard_report",
        _ => return None,
    })
}

fn level(x: f64, low_below: f64) -> &'static str {
    if x < low_below {
        "low"
    } else {
        "high"
    }
}

fn attrs_of<const N: usize>(pairs: [(&str, AttrValue); N]) -> Attrs {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

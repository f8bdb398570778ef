use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use decprov_core::capture::{expire as expire_log, gate_append, Candidate, CapturePolicy, RawAttr};
use decprov_core::compliance::{breach_report, check_flow, RuleSet};
use decprov_core::dot::pipeline_to_dot;
use decprov_core::log::{load, verify_chain};
use decprov_core::query::{actors_involved, trace_back, trace_forward, Pipeline, TraceOptions};
use decprov_core::records::{export_art30, render_report, Audience, ReportOptions};
use decprov_core::{Boundary, Draft, LoadedLog, NodeId, NodeKind, ProvGraph, ProvLog, RelKind, Timestamp, Window};
use decprov_sim::{bundled_policy, bundled_rules, bundled_spec, landmarks, run_scenario, ScenarioSpec, Thread};
use serde::{Deserialize, Serialize};

use crate::render;
use crate::{
    usage, ActorsArgs, Art30Args, AudienceArg, AuditArgs, BoundaryArg, DirectionArg, ExpireArgs, FlowsArgs, Format,
    IngestArgs, InvestigateArgs, LogArg, ReportArgs, SimulateArgs, ThreadArg, TraceArgs,
};

pub struct Ctx {
    pub format: Option<Format>,
    pub verbose: bool,
}

impl Ctx {
    /// The requested format, checked against what the command can render.
    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            return Err(usage(format!("--format {f:?} is not available for this command").to_lowercase()));
        }
        Ok(f)
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

const JSON_TEXT: &[Format] = &[Format::Json, Format::Text];

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn existing(path: &Path) -> Result<&Path> {
    if !path.exists() {
        return Err(usage(format!("{} does not exist", path.display())));
    }
    Ok(path)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(existing(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_log(arg: &LogArg) -> Result<decprov_core::Snapshot> {
    load(existing(&arg.log)?).with_context(|| format!("loading {}", arg.log.display()))
}

fn open_log(arg: &LogArg) -> Result<ProvLog> {
    ProvLog::open(existing(&arg.log)?).with_context(|| format!("opening {}", arg.log.display()))
}

fn load_policy(path: &Path) -> Result<CapturePolicy> {
    CapturePolicy::from_json(&read_text(path)?).with_context(|| format!("policy {}", path.display()))
}

fn load_rules(path: &Path) -> Result<RuleSet> {
    RuleSet::from_json(&read_text(path)?).with_context(|| format!("rules {}", path.display()))
}

fn parse_time(s: &str) -> Result<Timestamp> {
    Timestamp::parse(s).map_err(|e| usage(e.to_string()))
}

fn parse_window(s: Option<&str>) -> Result<Option<Window>> {
    let Some(s) = s else { return Ok(None) };
    let (a, b) = s.split_once("..").ok_or_else(|| usage(format!("window {s:?} is not of the form start..end")))?;
    let w = Window::new(parse_time(a)?, parse_time(b)?).map_err(|e| usage(e.to_string()))?;
    Ok(Some(w))
}

fn now_or_latest(now: Option<&str>, graph: &ProvGraph) -> Result<Timestamp> {
    match now {
        Some(s) => parse_time(s),
        None => Ok(graph.max_timestamp().unwrap_or(Timestamp::from_millis(0))),
    }
}

fn run_trace(graph: &ProvGraph, id: &str, direction: DirectionArg, opts: TraceOptions) -> Result<Pipeline> {
    let root = graph.resolve(id)?;
    Ok(match direction {
        DirectionArg::Back => trace_back(graph, &root, opts)?,
        DirectionArg::Forward => trace_forward(graph, &root, opts)?,
    })
}

/// One line of an ingest file.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum IngestEvent {
    Entity {
        timestamp: Timestamp,
        #[serde(default)]
        attrs: BTreeMap<String, RawAttr>,
    },
    Activity {
        timestamp: Timestamp,
        #[serde(default)]
        attrs: BTreeMap<String, RawAttr>,
    },
    Agent {
        timestamp: Timestamp,
        #[serde(default)]
        attrs: BTreeMap<String, RawAttr>,
    },
    Relation {
        rel: RelKind,
        src: String,
        dst: String,
        timestamp: Timestamp,
    },
    Flow {
        entity: String,
        from_agent: String,
        to_agent: String,
        boundary: Boundary,
        timestamp: Timestamp,
    },
}

impl IngestEvent {
    fn candidate(self, graph: &ProvGraph) -> Result<Candidate> {
        let node = |kind, timestamp, attrs| Ok(Candidate::node(kind, timestamp, attrs));
        match self {
            IngestEvent::Entity { timestamp, attrs } => node(NodeKind::Entity, timestamp, attrs),
            IngestEvent::Activity { timestamp, attrs } => node(NodeKind::Activity, timestamp, attrs),
            IngestEvent::Agent { timestamp, attrs } => node(NodeKind::Agent, timestamp, attrs),
            IngestEvent::Relation { rel, src, dst, timestamp } => {
                Ok(Draft::relation(rel, &graph.resolve(&src)?, &graph.resolve(&dst)?, timestamp).into())
            }
            IngestEvent::Flow { entity, from_agent, to_agent, boundary, timestamp } => Ok(Draft::flow(
                &graph.resolve(&entity)?,
                &graph.resolve(&from_agent)?,
                &graph.resolve(&to_agent)?,
                boundary,
                timestamp,
            )
            .into()),
        }
    }
}

#[derive(Serialize)]
struct IngestSummary {
    appended: Vec<NodeId>,
    dropped: usize,
    actions: BTreeMap<&'static str, usize>,
    decisions: Vec<decprov_core::compliance::Decision>,
}

pub fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let policy = match &a.policy {
        Some(p) => load_policy(p)?,
        None => CapturePolicy::record_everything(),
    };
    let rules = a.rules.as_deref().map(load_rules).transpose()?;
    let reader: Box<dyn Read> = if a.input.as_os_str() == "-" {
        Box::new(std::io::stdin())
    } else {
        Box::new(std::fs::File::open(existing(&a.input)?)?)
    };
    let mut log = if a.log.log.exists() { open_log(&a.log)? } else { ProvLog::create(&a.log.log)? };
    let mut summary =
        IngestSummary { appended: Vec::new(), dropped: 0, actions: BTreeMap::new(), decisions: Vec::new() };
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: IngestEvent = serde_json::from_str(&line).with_context(|| format!("input line {}", i + 1))?;
        let candidate = event.candidate(log.graph()).with_context(|| format!("input line {}", i + 1))?;
        let outcome = gate_append(&policy, &candidate, &mut log).with_context(|| format!("input line {}", i + 1))?;
        *summary.actions.entry(outcome.action_taken.name()).or_default() += 1;
        match outcome.appended {
            None => summary.dropped += 1,
            Some(id) => {
                if let (Some(rules), Draft::Flow { timestamp, .. }) = (&rules, &candidate.draft) {
                    let decision = check_flow(&mut log, rules, &id, *timestamp)?;
                    if !matches!(decision.reaction, decprov_core::compliance::Reaction::Allow) {
                        summary.decisions.push(decision);
                    }
                }
                summary.appended.push(id);
            }
        }
    }
    ctx.note(format!("{} records in {}", log.len(), a.log.log.display()));
    match format {
        Format::Text => println!(
            "appended {} dropped {} blocked {}",
            summary.appended.len(),
            summary.dropped,
            summary.decisions.len()
        ),
        _ => print_json(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(ctx: &Ctx, a: LogArg) -> Result<ExitCode> {
    let format = ctx.format(Format::Text, JSON_TEXT)?;
    let report = verify_chain(existing(&a.log)?)?;
    match format {
        Format::Text => match report.first_bad_index {
            None => println!("ok"),
            Some(i) => println!("tampered: first bad record at index {i} of {}", report.records),
        },
        _ => print_json(&report)?,
    }
    if let Some(i) = report.first_bad_index {
        eprintln!("error: hash chain broken at record {i}");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn trace(ctx: &Ctx, a: TraceArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, &[Format::Json, Format::Text, Format::Dot])?;
    let opts = TraceOptions { window: parse_window(a.window.as_deref())?, max_depth: a.max_depth };
    let graph = load_log(&a.log)?;
    let pipeline = run_trace(&graph, &a.id, a.direction, opts)?;
    match format {
        Format::Json => print_json(&pipeline)?,
        Format::Text => print!("{}", render::pipeline(&graph, &pipeline)),
        Format::Dot => print!("{}", pipeline_to_dot(&graph, &pipeline)),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn actors(ctx: &Ctx, a: ActorsArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let opts = TraceOptions { window: parse_window(a.window.as_deref())?, max_depth: None };
    let graph = load_log(&a.log)?;
    let pipeline = run_trace(&graph, &a.id, a.direction, opts)?;
    let actors = actors_involved(&graph, &pipeline);
    match format {
        Format::Text => print!("{}", render::actors(&actors)),
        _ => print_json(&actors)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// A flow event with its endpoints named.
#[derive(Serialize)]
pub struct FlowView {
    pub id: NodeId,
    pub timestamp: Timestamp,
    pub entity: NodeId,
    pub category: Option<String>,
    pub from: String,
    pub to: String,
    pub boundary: Boundary,
}

pub fn flows(ctx: &Ctx, a: FlowsArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let window = parse_window(a.window.as_deref())?;
    let graph = load_log(&a.log)?;
    let wanted = a.boundary.map(|b| match b {
        BoundaryArg::None => Boundary::None,
        BoundaryArg::Technical => Boundary::Technical,
        BoundaryArg::Administrative => Boundary::Administrative,
    });
    let name = |id: &NodeId| graph.get_node(id).map(|n| n.display_name().to_owned()).unwrap_or_else(|_| id.to_string());
    let views: Vec<FlowView> = graph
        .flows()
        .filter(|f| window.is_none_or(|w| w.contains(f.timestamp)))
        .filter(|f| wanted.is_none_or(|b| f.boundary == b))
        .map(|f| FlowView {
            id: f.id.clone(),
            timestamp: f.timestamp,
            entity: f.entity.clone(),
            category: graph.get_node(&f.entity).ok().and_then(|n| n.attr_str("category")).map(str::to_owned),
            from: name(&f.from_agent),
            to: name(&f.to_agent),
            boundary: f.boundary,
        })
        .collect();
    match format {
        Format::Text => print!("{}", render::flows(&views)),
        _ => print_json(&views)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AuditSummary {
    flows_checked: usize,
    now: Timestamp,
    /// Decisions other than the implicit allow.
    decisions: Vec<decprov_core::compliance::Decision>,
}

pub fn audit(ctx: &Ctx, a: AuditArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    if let Some(target) = &a.breach {
        let mut log = open_log(&a.log)?;
        let incident = log.graph().resolve(target)?;
        let report = breach_report(&mut log, &incident, &a.recipient)?;
        match format {
            Format::Text => print!("{}", report.render_text(log.graph())),
            _ => print_json(&report)?,
        }
        return Ok(ExitCode::SUCCESS);
    }
    let Some(rules) = &a.rules else {
        return Err(usage("audit needs --rules or --breach"));
    };
    let rules = load_rules(rules)?;
    let graph = load_log(&a.log)?;
    let now = now_or_latest(a.now.as_deref(), &graph)?;
    let mut summary = AuditSummary { flows_checked: 0, now, decisions: Vec::new() };
    for f in graph.flows() {
        summary.flows_checked += 1;
        let d = rules.evaluate_flow(&graph, &f.id, now)?;
        if d.rule.is_some() {
            summary.decisions.push(d);
        }
    }
    match format {
        Format::Text => {
            println!("{} flows checked at {}", summary.flows_checked, summary.now);
            for d in &summary.decisions {
                println!("{}  {}  rule {}", d.event, d.reaction, d.rule.as_deref().unwrap_or("-"));
            }
        }
        _ => print_json(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    if !(a.cap > 0.0 && a.cap <= 1.0) {
        return Err(usage("--cap must be in (0, 1]"));
    }
    let loaded = LoadedLog::read(existing(&a.log.log)?)?;
    if !loaded.integrity.ok {
        eprintln!("warning: the log's hash chain does not verify");
    }
    let root = loaded.graph.resolve(&a.id)?;
    let audience = match a.audience {
        AudienceArg::Regulator => Audience::Regulator,
        AudienceArg::Developer => Audience::Developer,
        AudienceArg::User => Audience::User,
    };
    let opts = ReportOptions { audience, proportion_cap: a.cap };
    let report = render_report(&loaded, &root, opts)?;
    match format {
        Format::Text => print!("{}", report.render_text(&loaded.graph)),
        _ => print_json(&report)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn art30(ctx: &Ctx, a: Art30Args) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let graph = load_log(&a.log)?;
    let records = match &a.controller {
        Some(c) => vec![export_art30(&graph, &graph.resolve(c)?)?],
        None => {
            let controllers: Vec<NodeId> = graph
                .nodes()
                .filter(|n| n.kind == NodeKind::Agent && n.attr_str("role") == Some("controller"))
                .map(|n| n.id.clone())
                .collect();
            if controllers.is_empty() {
                bail!("no agent in the log has role=controller");
            }
            controllers.iter().map(|c| export_art30(&graph, c)).collect::<Result<_, _>>()?
        }
    };
    match (format, a.controller.is_some()) {
        (Format::Text, _) => records.iter().for_each(|r| print!("{}", render::art30(r))),
        (_, true) => print_json(&records[0])?,
        (_, false) => print_json(&records)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulateSummary {
    scenario: String,
    seed: u64,
    records: usize,
    events: usize,
    landmarks: decprov_sim::Landmarks,
}

pub fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let mut spec = match &a.scenario {
        Some(p) => ScenarioSpec::from_json(&read_text(p)?).with_context(|| format!("scenario {}", p.display()))?,
        None => bundled_spec(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.no_faults {
        spec.faults.clear();
    }
    let policy = match &a.policy {
        Some(p) => load_policy(p)?,
        None => bundled_policy(),
    };
    let rules = match (&a.rules, a.no_rules) {
        (_, true) => None,
        (Some(p), false) => Some(load_rules(p)?),
        (None, false) => Some(bundled_rules()),
    };
    let started = Instant::now();
    let out = run_scenario(&spec, &policy, rules.as_ref())?;
    ctx.note(format!("simulated {} in {:?}", spec.name, started.elapsed()));
    out.log.write_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(t) = &a.trace {
        std::fs::write(t, out.trace.to_jsonl()).with_context(|| format!("writing {}", t.display()))?;
    }
    let graph = out.log.snapshot();
    let summary = SimulateSummary {
        scenario: spec.name.clone(),
        seed: spec.seed,
        records: graph.len(),
        events: out.trace.events.len(),
        landmarks: landmarks(&graph)?,
    };
    match format {
        Format::Text => print!("{}", render::landmarks(&graph, &summary.landmarks, summary.records)),
        _ => print_json(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn investigate(ctx: &Ctx, a: InvestigateArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    let threads: Vec<Thread> = match a.thread {
        Some(ThreadArg::Driver) => vec![Thread::Driver],
        Some(ThreadArg::Lighting) => vec![Thread::Lighting],
        Some(ThreadArg::Ambulance) => vec![Thread::Ambulance],
        None => Thread::ALL.to_vec(),
    };
    let mut log = open_log(&a.log)?;
    let mut findings = Vec::new();
    for t in threads {
        findings.push(decprov_sim::investigate(&mut log, t.name())?);
    }
    match (format, a.thread.is_some()) {
        (Format::Text, _) => findings.iter().for_each(|f| print!("{}", render::findings(f))),
        (_, true) => print_json(&findings[0])?,
        (_, false) => print_json(&findings)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ExpireSummary {
    now: Timestamp,
    records: usize,
    tombstoned: Vec<NodeId>,
}

pub fn expire(ctx: &Ctx, a: ExpireArgs) -> Result<ExitCode> {
    let format = ctx.format(Format::Json, JSON_TEXT)?;
    if a.out == a.log.log {
        return Err(usage("--out must differ from --log; the original log is left untouched"));
    }
    let policy = load_policy(&a.policy)?;
    let graph = load_log(&a.log)?;
    let now = now_or_latest(a.now.as_deref(), &graph)?;
    let expiry = expire_log(&policy, &graph, now)?;
    expiry.log.write_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let summary = ExpireSummary { now, records: expiry.log.len(), tombstoned: expiry.tombstoned };
    match format {
        Format::Text => println!("tombstoned {} of {} records", summary.tombstoned.len(), summary.records),
        _ => print_json(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

//! Scenario files: who takes part, what each component does and when, how
//! data moves between components, and which faults to inject.

use std::collections::{BTreeMap, BTreeSet};

use decprov_core::{Attrs, Boundary, Timestamp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Wall-clock time of tick 0.
    pub start: Timestamp,
    /// Last tick, in seconds. Zero yields a declarations-only log.
    pub horizon_s: i64,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    /// Street busyness as a step function of time, 0..1.
    #[serde(default)]
    pub busyness: Vec<Level>,
    /// Objects in view of particular vehicles.
    #[serde(default)]
    pub hazards: Vec<Hazard>,
    #[serde(default)]
    pub faults: Vec<FaultInjection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    /// Free text: organisation, vehicle, device, app.
    pub kind: String,
    #[serde(default)]
    pub attrs: Attrs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    /// One instance runs per listed agent, named `agent/name`.
    pub agents: Vec<String>,
    pub schedule: Schedule,
    pub behavior: Behavior,
    /// Merged into the activities this component records.
    #[serde(default)]
    pub attrs: Attrs,
    /// Merged into the entities this component emits.
    #[serde(default)]
    pub output_attrs: Attrs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Every {
        every_s: i64,
        #[serde(default)]
        offset_s: i64,
    },
    At {
        at_s: Vec<i64>,
    },
}

impl Schedule {
    /// Firing ticks up to `horizon`. Ticks before zero (set-up history) are
    /// kept only for explicit `at_s` lists.
    pub fn ticks(&self, horizon: i64) -> Vec<i64> {
        if horizon <= 0 {
            return Vec::new();
        }
        match self {
            Schedule::Every { every_s, offset_s } => {
                let mut out = Vec::new();
                let mut t = *offset_s;
                while t < 0 {
                    t += every_s;
                }
                while t <= horizon {
                    out.push(t);
                    t += every_s;
                }
                out
            }
            Schedule::At { at_s } => at_s.iter().copied().filter(|&t| t <= horizon).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasheetSpec {
    pub collection_method: String,
    pub legal_basis: String,
    #[serde(default)]
    pub known_biases: Vec<String>,
    #[serde(default)]
    pub preprocessing: Vec<String>,
}

/// What a component does each time it fires.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// A dataset, with its datasheet.
    Dataset {
        records: u64,
        datasheet: Option<DatasheetSpec>,
    },
    /// Trains on the latest dataset and publishes a model with its card.
    ModelRelease {
        model: String,
        version: u32,
        intended_context: String,
        benchmarks: BTreeMap<String, f64>,
    },
    /// Installs the latest model release received.
    ModelUpdate,
    /// Camera frames; observes the current street lighting.
    Camera {
        sentinel: String,
    },
    /// Runs the installed model on the latest frame.
    ObjectDetection {
        threshold: f64,
        low_light_below: f64,
    },
    /// Shares the latest detection with nearby vehicles.
    HazardShare,
    /// Brakes if the own detection or any peer report shows a hazard.
    BrakingControl,
    Telemetry {
        sentinel: String,
    },
    FleetDensity {
        capacity: f64,
        low_below: f64,
    },
    /// Crowdsourced position reports from app users.
    LocationPing {
        sentinel: String,
        users_at_full: f64,
    },
    SoftwareRelease {
        service: String,
        version: String,
    },
    CrowdDensity {
        users_at_full: f64,
        low_below: f64,
    },
    LightingControl {
        dim_below: f64,
        dim_level: f64,
        bright_level: f64,
    },
    /// Applies the latest lighting command to the street.
    LightActuation,
    ResidentReport {
        sentinel: String,
    },
    EventListing {
        event: String,
        venue: String,
        starts_at: String,
    },
    EventAdjustment,
    HistoricSummary {
        area: String,
        baseline_hotspot: bool,
    },
    /// Classifies area risk from exactly three inputs and plans dispatch.
    RiskPlanning {
        area: String,
    },
    EmergencyCall {
        sentinel: String,
        eta_nearby_s: i64,
        eta_redirected_s: i64,
    },
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Dataset { .. } => "dataset",
            Behavior::ModelRelease { .. } => "model_release",
            Behavior::ModelUpdate => "model_update",
            Behavior::Camera { .. } => "camera",
            Behavior::ObjectDetection { .. } => "object_detection",
            Behavior::HazardShare => "hazard_share",
            Behavior::BrakingControl => "braking_control",
            Behavior::Telemetry { .. } => "telemetry",
            Behavior::FleetDensity { .. } => "fleet_density",
            Behavior::LocationPing { .. } => "location_ping",
            Behavior::SoftwareRelease { .. } => "software_release",
            Behavior::CrowdDensity { .. } => "crowd_density",
            Behavior::LightingControl { .. } => "lighting_control",
            Behavior::LightActuation => "light_actuation",
            Behavior::ResidentReport { .. } => "resident_report",
            Behavior::EventListing { .. } => "event_listing",
            Behavior::EventAdjustment => "event_adjustment",
            Behavior::HistoricSummary { .. } => "historic_summary",
            Behavior::RiskPlanning { .. } => "risk_planning",
            Behavior::EmergencyCall { .. } => "emergency_call",
        }
    }

    fn is_sensor(&self) -> bool {
        matches!(self, Behavior::Camera { .. } | Behavior::Telemetry { .. } | Behavior::LocationPing { .. })
    }
}

/// Which producer instances feed which consumer instances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Any,
    SameAgent,
    OtherAgents,
}

impl Link {
    pub fn admits(self, producer_agent: &str, consumer_agent: &str) -> bool {
        match self {
            Link::Any => true,
            Link::SameAgent => producer_agent == consumer_agent,
            Link::OtherAgents => producer_agent != consumer_agent,
        }
    }
}

/// `consumer` receives `producer`'s entities of `category`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    pub producer: String,
    pub consumer: String,
    pub category: String,
    /// Boundary crossed when the two instances run on different agents.
    pub boundary: Boundary,
    #[serde(default)]
    pub link: Link,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub from_s: i64,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hazard {
    pub from_s: i64,
    pub to_s: i64,
    pub visible_to: Vec<String>,
    pub objects: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultWindow {
    pub start_s: i64,
    pub end_s: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultKind {
    /// Automatic updates stop; the model in use is the one a manual update
    /// installed `staleness_s` before the window.
    ModelStale { staleness_s: i64 },
    /// A defective release runs for the window, then is rolled back.
    ServiceBadUpdate { version: String },
    /// The named process does not run during the window.
    ProcessSkipped { process: String },
    /// Sensor readings are offset during the window.
    SensorBias { offset: f64 },
}

impl FaultKind {
    /// Value of the `fault` attr on nodes the fault creates.
    pub fn tag(&self) -> &'static str {
        match self {
            FaultKind::ModelStale { .. } => "model_stale",
            FaultKind::ServiceBadUpdate { .. } => "service_bad_update",
            FaultKind::ProcessSkipped { .. } => "process_skipped",
            FaultKind::SensorBias { .. } => "sensor_bias",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    pub kind: FaultKind,
    /// Component instance, `agent/component`.
    pub target: String,
    pub window: FaultWindow,
}

impl FaultInjection {
    pub fn covers(&self, t: i64) -> bool {
        self.window.start_s <= t && t <= self.window.end_s
    }
}

/// A component running on one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub component: usize,
    pub agent: usize,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario specs always serialize")
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    /// Component instances in declaration order.
    pub fn instances(&self) -> Vec<Instance> {
        let mut out = Vec::new();
        for (c, comp) in self.components.iter().enumerate() {
            for agent in &comp.agents {
                if let Some(a) = self.agent_index(agent) {
                    out.push(Instance { name: format!("{agent}/{}", comp.name), component: c, agent: a });
                }
            }
        }
        out
    }

    /// Busyness at tick `t` (0 before the first step).
    pub fn busyness_at(&self, t: i64) -> f64 {
        self.busyness.iter().rev().find(|l| l.from_s <= t).map_or(0.0, |l| l.level)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.horizon_s < 0 {
            return bad(format!("horizon {} is negative", self.horizon_s));
        }
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if !names.insert(a.name.as_str()) {
                return bad(format!("agent {} is declared twice", a.name));
            }
        }
        let mut components = BTreeSet::new();
        for c in &self.components {
            if !components.insert(c.name.as_str()) {
                return bad(format!("component {} is declared twice", c.name));
            }
            if c.agents.is_empty() {
                return bad(format!("component {} runs on no agent", c.name));
            }
            for a in &c.agents {
                if !names.contains(a.as_str()) {
                    return bad(format!("component {} runs on undeclared agent {a}", c.name));
                }
            }
            if let Schedule::Every { every_s, .. } = c.schedule {
                if every_s <= 0 {
                    return bad(format!("component {}: period must be positive", c.name));
                }
            }
        }
        for d in &self.dependencies {
            for end in [&d.producer, &d.consumer] {
                if !components.contains(end.as_str()) {
                    return bad(format!("dependency refers to undeclared component {end}"));
                }
            }
        }
        for h in &self.hazards {
            for a in &h.visible_to {
                if !names.contains(a.as_str()) {
                    return bad(format!("hazard visible to undeclared agent {a}"));
                }
            }
        }
        for f in &self.faults {
            self.check_fault(f)?;
        }
        Ok(())
    }

    fn check_fault(&self, fault: &FaultInjection) -> Result<()> {
        let FaultWindow { start_s, end_s } = fault.window;
        if start_s < 0 || end_s < start_s || end_s > self.horizon_s {
            return Err(SimError::WindowOutOfRange { start: start_s, end: end_s, horizon: self.horizon_s });
        }
        let Some(inst) = self.instances().into_iter().find(|i| i.name == fault.target) else {
            return Err(SimError::InvalidSpec(format!("fault targets unknown component instance {}", fault.target)));
        };
        let behavior = &self.components[inst.component].behavior;
        let fits = match fault.kind {
            FaultKind::ModelStale { staleness_s } => staleness_s >= 0 && matches!(behavior, Behavior::ModelUpdate),
            FaultKind::ServiceBadUpdate { .. } => matches!(behavior, Behavior::SoftwareRelease { .. }),
            FaultKind::ProcessSkipped { .. } => true,
            FaultKind::SensorBias { .. } => behavior.is_sensor(),
        };
        if !fits {
            return Err(SimError::InvalidSpec(format!(
                "{} fault cannot apply to {} ({})",
                fault.kind.tag(),
                fault.target,
                behavior.name()
            )));
        }
        Ok(())
    }
}

/// A copy of `spec` with `fault` added.
pub fn inject(spec: &ScenarioSpec, fault: FaultInjection) -> Result<ScenarioSpec> {
    spec.check_fault(&fault)?;
    let mut out = spec.clone();
    out.faults.push(fault);
    Ok(out)
}

/// A copy of `spec` without the last fault equal to `fault`.
pub fn remove(spec: &ScenarioSpec, fault: &FaultInjection) -> ScenarioSpec {
    let mut out = spec.clone();
    if let Some(i) = out.faults.iter().rposition(|f| f == fault) {
        out.faults.remove(i);
    }
    out
}

//! Declarative experiment description, parsed from TOML.
//!
//! A scenario names the network, conductors, weather, control resources,
//! limits, disturbance bounds, controller parameters and simulation setup.
//! [`ScenarioConfig::validate`] checks everything at once and reports every
//! problem it finds.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub network: NetworkConfig,
    pub conductors: BTreeMap<String, ConductorConfig>,
    pub weather: BTreeMap<String, WeatherConfig>,
    pub lines: Vec<LineConfig>,
    pub battery: BatteryConfig,
    #[serde(default)]
    pub curtailment: Vec<CurtailmentConfig>,
    pub disturbance: DisturbanceConfig,
    pub controller: ControllerConfig,
    pub simulation: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub slack_bus: String,
    pub nodes: Vec<String>,
    pub ptdf: Vec<PtdfEntry>,
}

/// Flow change on `line` per MW injected at `node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtdfEntry {
    pub line: String,
    pub node: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductorConfig {
    pub mass_kg_per_m: f64,
    pub heat_capacity_j_per_kg_k: f64,
    pub diameter_m: f64,
    pub resistance_ohm_per_m: f64,
    #[serde(default = "default_absorbance")]
    pub absorbance: f64,
    pub air_conductivity_w_per_k_m: f64,
}

fn default_absorbance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherConfig {
    pub nusselt: f64,
    pub ambient_c: f64,
    pub radiation_w_per_m2: f64,
    pub reactive_power_var: f64,
    pub voltage_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub name: String,
    pub conductor: String,
    pub weather: String,
    /// Average flow reported for the line; informational.
    pub average_flow_mw: f64,
    /// Flow around which Joule heating is linearized.
    pub linearization_flow_mw: f64,
    pub max_temperature_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub node: String,
    pub max_power_mw: f64,
    pub energy_min_mwh: f64,
    pub energy_max_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurtailmentConfig {
    pub site: String,
    pub cap_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// Per-line bound on the flow disturbance, MW per step.
    pub flow_mw: f64,
    /// Per-line bound on the temperature disturbance, °C per step.
    pub temperature_c: f64,
    /// Admissible |F − F₀| as a fraction of F₀, used to bound the
    /// linearization error that is added to the temperature bound.
    #[serde(default = "default_flow_deviation")]
    pub flow_deviation_fraction: f64,
}

fn default_flow_deviation() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub time_step_s: f64,
    pub battery_cost: f64,
    pub curtailment_cost: Vec<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    #[serde(default)]
    pub refine_iterations: usize,
    #[serde(default = "default_max_iter")]
    pub qp_max_iter: usize,
    pub feedback_groups: Vec<FeedbackGroupConfig>,
}

fn default_theta() -> f64 {
    1e-6
}

fn default_regularization() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    20_000
}

/// One block of the decentralized feedback gain.
///
/// `inputs` are `"battery"` or `"curtail:<site>"`; `states` are block names
/// (`flow`, `temperature`, `battery_power`, `battery_energy`,
/// `curtail_register`, `curtail_level`), optionally suffixed with
/// `:<line or site>` to select one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackGroupConfig {
    pub inputs: Vec<String>,
    pub states: Vec<String>,
    pub poles: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    Uniform,
    ExtremeVertex,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub disturbance_mode: DisturbanceMode,
    pub initial_flows_mw: Vec<f64>,
    /// Defaults to the equilibrium temperature at the initial flows.
    #[serde(default)]
    pub initial_temperatures_c: Option<Vec<f64>>,
    pub initial_battery_energy_mwh: f64,
    /// Uncontrolled drift added to every line flow, MW per minute.
    #[serde(default)]
    pub flow_ramp_mw_per_min: Vec<f64>,
}

fn default_mode() -> DisturbanceMode {
    DisturbanceMode::Uniform
}

/// One validation problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

impl ScenarioConfig {
    /// Parse TOML text and validate.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn line_index(&self, name: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.name == name)
    }

    pub fn site_index(&self, name: &str) -> Option<usize> {
        self.curtailment.iter().position(|c| c.site == name)
    }

    pub fn ptdf(&self, line: &str, node: &str) -> Option<f64> {
        self.network.ptdf.iter().find(|p| p.line == line && p.node == node).map(|p| p.value)
    }

    /// Every requested closed-loop pole, in group order.
    pub fn all_poles(&self) -> Vec<f64> {
        self.controller.feedback_groups.iter().flat_map(|g| g.poles.iter().copied()).collect()
    }

    /// Check every schema rule and collect all failures.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Validator::default();
        self.check(&mut v);
        if v.issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(v.issues))
        }
    }

    fn check(&self, v: &mut Validator) {
        if self.format_version != FORMAT_VERSION {
            v.push("format_version", format!("unsupported version {}, expected {FORMAT_VERSION}", self.format_version));
        }

        let nodes: HashSet<&str> = self.network.nodes.iter().map(String::as_str).collect();
        if nodes.len() != self.network.nodes.len() {
            v.push("network.nodes", "duplicate node name");
        }
        if self.lines.is_empty() {
            v.push("lines", "at least one controlled line is required");
        }
        let mut line_names = HashSet::new();
        for (i, line) in self.lines.iter().enumerate() {
            let p = format!("lines[{i}]");
            if !line_names.insert(line.name.as_str()) {
                v.push(&format!("{p}.name"), format!("duplicate line name '{}'", line.name));
            }
            if !self.conductors.contains_key(&line.conductor) {
                v.push(&format!("{p}.conductor"), format!("unknown conductor '{}'", line.conductor));
            }
            if !self.weather.contains_key(&line.weather) {
                v.push(&format!("{p}.weather"), format!("unknown weather '{}'", line.weather));
            }
            v.positive(&format!("{p}.average_flow_mw"), line.average_flow_mw);
            if !(line.linearization_flow_mw >= 1.0) {
                v.push(&format!("{p}.linearization_flow_mw"), "must be at least 1 MW");
            }
            v.finite(&format!("{p}.max_temperature_c"), line.max_temperature_c);
        }

        for (i, e) in self.network.ptdf.iter().enumerate() {
            let p = format!("network.ptdf[{i}]");
            if !line_names.contains(e.line.as_str()) {
                v.push(&format!("{p}.line"), format!("unknown line '{}'", e.line));
            }
            if !nodes.contains(e.node.as_str()) {
                v.push(&format!("{p}.node"), format!("unknown node '{}'", e.node));
            }
            if !(-1.0..=1.0).contains(&e.value) {
                v.push(&format!("{p}.value"), format!("PTDF {} outside [-1, 1]", e.value));
            }
        }
        let mut seen = HashSet::new();
        for e in &self.network.ptdf {
            if !seen.insert((e.line.as_str(), e.node.as_str())) {
                v.push("network.ptdf", format!("duplicate entry for ({}, {})", e.line, e.node));
            }
        }

        for (name, c) in &self.conductors {
            let p = format!("conductors.{name}");
            v.positive(&format!("{p}.mass_kg_per_m"), c.mass_kg_per_m);
            v.positive(&format!("{p}.heat_capacity_j_per_kg_k"), c.heat_capacity_j_per_kg_k);
            v.positive(&format!("{p}.diameter_m"), c.diameter_m);
            v.positive(&format!("{p}.resistance_ohm_per_m"), c.resistance_ohm_per_m);
            v.positive(&format!("{p}.air_conductivity_w_per_k_m"), c.air_conductivity_w_per_k_m);
            if !(0.2..=0.9).contains(&c.absorbance) {
                v.push(&format!("{p}.absorbance"), "must lie in [0.2, 0.9]");
            }
        }
        for (name, w) in &self.weather {
            let p = format!("weather.{name}");
            v.positive(&format!("{p}.nusselt"), w.nusselt);
            v.positive(&format!("{p}.voltage_v"), w.voltage_v);
            v.finite(&format!("{p}.ambient_c"), w.ambient_c);
            v.finite(&format!("{p}.reactive_power_var"), w.reactive_power_var);
            if !(w.radiation_w_per_m2 >= 0.0) {
                v.push(&format!("{p}.radiation_w_per_m2"), "must be non-negative");
            }
        }

        if !nodes.contains(self.battery.node.as_str()) {
            v.push("battery.node", format!("unknown node '{}'", self.battery.node));
        }
        v.positive("battery.max_power_mw", self.battery.max_power_mw);
        if !(self.battery.energy_min_mwh >= 0.0 && self.battery.energy_max_mwh > self.battery.energy_min_mwh) {
            v.push("battery.energy_max_mwh", "need 0 <= energy_min_mwh < energy_max_mwh");
        }

        let mut sites = HashSet::new();
        for (i, c) in self.curtailment.iter().enumerate() {
            let p = format!("curtailment[{i}]");
            if !nodes.contains(c.site.as_str()) {
                v.push(&format!("{p}.site"), format!("unknown node '{}'", c.site));
            }
            if !sites.insert(c.site.as_str()) {
                v.push(&format!("{p}.site"), format!("duplicate site '{}'", c.site));
            }
            v.positive(&format!("{p}.cap_mw"), c.cap_mw);
        }

        let d = &self.disturbance;
        v.non_negative("disturbance.flow_mw", d.flow_mw);
        v.non_negative("disturbance.temperature_c", d.temperature_c);
        v.non_negative("disturbance.flow_deviation_fraction", d.flow_deviation_fraction);

        let c = &self.controller;
        if c.horizon < 1 {
            v.push("controller.horizon", "must be at least 1");
        }
        v.positive("controller.time_step_s", c.time_step_s);
        v.positive("controller.battery_cost", c.battery_cost);
        if c.curtailment_cost.len() != self.curtailment.len() {
            v.push(
                "controller.curtailment_cost",
                format!("expected {} entries, got {}", self.curtailment.len(), c.curtailment_cost.len()),
            );
        }
        for (i, &q) in c.curtailment_cost.iter().enumerate() {
            v.positive(&format!("controller.curtailment_cost[{i}]"), q);
        }
        v.non_negative("controller.theta", c.theta);
        v.positive("controller.regularization", c.regularization);
        if c.qp_max_iter == 0 {
            v.push("controller.qp_max_iter", "must be positive");
        }
        let line_set: Vec<&str> = self.lines.iter().map(|l| l.name.as_str()).collect();
        let site_set: Vec<&str> = self.curtailment.iter().map(|c| c.site.as_str()).collect();
        for (gi, g) in c.feedback_groups.iter().enumerate() {
            let p = format!("controller.feedback_groups[{gi}]");
            if g.inputs.is_empty() {
                v.push(&format!("{p}.inputs"), "empty input list");
            }
            for inp in &g.inputs {
                if let Err(m) = parse_input_ref(inp, &site_set) {
                    v.push(&format!("{p}.inputs"), m);
                }
            }
            for st in &g.states {
                if let Err(m) = parse_state_ref(st, &line_set, &site_set) {
                    v.push(&format!("{p}.states"), m);
                }
            }
            for (k, &pole) in g.poles.iter().enumerate() {
                if !(pole.is_finite() && pole.abs() < 1.0) {
                    v.push(&format!("{p}.poles[{k}]"), format!("pole {pole} is not strictly inside the unit circle"));
                }
            }
        }

        let s = &self.simulation;
        if s.initial_flows_mw.len() != self.lines.len() {
            v.push("simulation.initial_flows_mw", format!("expected {} entries", self.lines.len()));
        }
        if let Some(t) = &s.initial_temperatures_c {
            if t.len() != self.lines.len() {
                v.push("simulation.initial_temperatures_c", format!("expected {} entries", self.lines.len()));
            }
        }
        if !s.flow_ramp_mw_per_min.is_empty() && s.flow_ramp_mw_per_min.len() != self.lines.len() {
            v.push("simulation.flow_ramp_mw_per_min", format!("expected {} entries", self.lines.len()));
        }
        let e0 = s.initial_battery_energy_mwh;
        if !(e0 >= self.battery.energy_min_mwh && e0 <= self.battery.energy_max_mwh) {
            v.push("simulation.initial_battery_energy_mwh", "outside battery energy bounds");
        }
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<Issue>,
}

impl Validator {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.issues.push(Issue { field: field.to_string(), message: message.into() });
    }

    fn positive(&mut self, field: &str, value: f64) {
        if !(value > 0.0 && value.is_finite()) {
            self.push(field, format!("must be positive and finite, got {value}"));
        }
    }

    fn non_negative(&mut self, field: &str, value: f64) {
        if !(value >= 0.0 && value.is_finite()) {
            self.push(field, format!("must be non-negative and finite, got {value}"));
        }
    }

    fn finite(&mut self, field: &str, value: f64) {
        if !value.is_finite() {
            self.push(field, "must be finite");
        }
    }
}

/// Control channel named in a feedback group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputRef {
    Battery,
    Curtail(usize),
}

/// State block (optionally one member) named in a feedback group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRef {
    Flow(Option<usize>),
    Temperature(Option<usize>),
    BatteryPower,
    BatteryEnergy,
    CurtailRegister(Option<usize>),
    CurtailLevel(Option<usize>),
}

pub fn parse_input_ref(s: &str, sites: &[&str]) -> Result<Vec<InputRef>, String> {
    match s.split_once(':') {
        None if s == "battery" => Ok(vec![InputRef::Battery]),
        None if s == "curtail" => Ok((0..sites.len()).map(InputRef::Curtail).collect()),
        Some(("curtail", site)) => sites
            .iter()
            .position(|&x| x == site)
            .map(|i| vec![InputRef::Curtail(i)])
            .ok_or_else(|| format!("unknown curtailment site '{site}'")),
        _ => Err(format!("unknown input '{s}'")),
    }
}

pub fn parse_state_ref(s: &str, lines: &[&str], sites: &[&str]) -> Result<StateRef, String> {
    let (block, member) = match s.split_once(':') {
        Some((b, m)) => (b, Some(m)),
        None => (s, None),
    };
    let find = |names: &[&str], what: &str| -> Result<Option<usize>, String> {
        match member {
            None => Ok(None),
            Some(m) => names.iter().position(|&x| x == m).map(Some).ok_or_else(|| format!("unknown {what} '{m}'")),
        }
    };
    match block {
        "flow" => Ok(StateRef::Flow(find(lines, "line")?)),
        "temperature" => Ok(StateRef::Temperature(find(lines, "line")?)),
        "battery_power" if member.is_none() => Ok(StateRef::BatteryPower),
        "battery_energy" if member.is_none() => Ok(StateRef::BatteryEnergy),
        "curtail_register" => Ok(StateRef::CurtailRegister(find(sites, "site")?)),
        "curtail_level" => Ok(StateRef::CurtailLevel(find(sites, "site")?)),
        _ => Err(format!("unknown state block '{s}'")),
    }
}

/// Bundled scenario based on the Isle Jourdain 90 kV zone.
pub const ISLE_JOURDAIN: &str = include_str!("../../../scenarios/isle_jourdain.scenario");
/// Same network and conductor data under heatwave ambient conditions with
/// rising flows, used for closed-loop stress testing.
pub const ISLE_JOURDAIN_HEATWAVE: &str = include_str!("../../../scenarios/isle_jourdain_heatwave.scenario");

pub fn isle_jourdain() -> ScenarioConfig {
    ScenarioConfig::from_toml_str(ISLE_JOURDAIN).expect("bundled scenario is valid")
}

pub fn isle_jourdain_heatwave() -> ScenarioConfig {
    ScenarioConfig::from_toml_str(ISLE_JOURDAIN_HEATWAVE).expect("bundled scenario is valid")
}

//! Closed-loop simulation against the nonlinear plant.
//!
//! Each step measures the plant, converts to deviation coordinates, solves
//! the nominal problem, applies the tube law and advances the plant with a
//! sampled disturbance. When the nominal problem cannot be solved, the
//! shifted previous plan is tracked with the feedback gain and the step is
//! flagged.

use std::time::Instant;

use log::warn;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltimodel::{build_from_scenario, ModelError, SystemMatrices};
use crate::mpc::qp::QpStatus;
use crate::mpc::{tube_law, TubeController};
use crate::robust::RobustError;
use crate::scenario::{DisturbanceMode, ScenarioConfig};
use crate::thermal::{equilibrium_temperature, step_nonlinear};

/// Absolute bound on stored energy excursions attributed to rounding, MWh.
const ENERGY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("battery energy {energy} MWh left [{min}, {max}] at step {step}")]
    BatteryBound { step: usize, energy: f64, min: f64, max: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Controller(#[from] RobustError),
}

/// Plant state in absolute units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub flows: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub battery_power: f64,
    pub battery_energy: f64,
    pub curtail_register: Vec<f64>,
    pub curtail_level: Vec<f64>,
}

impl PlantState {
    /// Initial state from the scenario; temperatures default to the
    /// equilibrium at the initial flows.
    pub fn initial(cfg: &ScenarioConfig, sys: &SystemMatrices) -> Self {
        let flows = cfg.simulation.initial_flows_mw.clone();
        let temperatures = match &cfg.simulation.initial_temperatures_c {
            Some(t) => t.clone(),
            None => flows.iter().zip(&sys.coeffs).map(|(&f, c)| equilibrium_temperature(f, c)).collect(),
        };
        let ng = sys.layout.n_g;
        Self {
            flows,
            temperatures,
            battery_power: 0.0,
            battery_energy: cfg.simulation.initial_battery_energy_mwh,
            curtail_register: vec![0.0; ng],
            curtail_level: vec![0.0; ng],
        }
    }

    /// State vector in the controller's deviation coordinates.
    pub fn to_deviation(&self, sys: &SystemMatrices) -> DVector<f64> {
        let l = sys.layout;
        let mut x = DVector::zeros(l.n());
        for i in 0..l.n_l {
            x[l.flow().start + i] = self.flows[i] - sys.lp[i].f0;
            x[l.temperature().start + i] = self.temperatures[i] - sys.lp[i].t0;
        }
        x[l.battery_power()] = self.battery_power;
        x[l.battery_energy()] = self.battery_energy;
        for j in 0..l.n_g {
            x[l.curtail_register().start + j] = self.curtail_register[j];
            x[l.curtail_level().start + j] = self.curtail_level[j];
        }
        x
    }
}

/// Advance the nonlinear plant by one step.
///
/// `control = [Δu_batt, Δu_curt…]`; `w = [w_flow (n_l), w_temp (n_l)]`;
/// `drift` is the uncontrolled flow change per step.
pub fn plant_step(state: &PlantState, control: &DVector<f64>, w: &DVector<f64>, drift: &[f64], sys: &SystemMatrices) -> PlantState {
    let l = sys.layout;
    let du = control[l.battery_input()];
    let mut flows = Vec::with_capacity(l.n_l);
    let mut temperatures = Vec::with_capacity(l.n_l);
    for i in 0..l.n_l {
        let batt = sys.l_batt[i] * du;
        temperatures.push(step_nonlinear(state.temperatures[i], state.flows[i], &sys.coeffs[i], batt, w[l.n_l + i]));
        let curt: f64 = (0..l.n_g).map(|j| sys.l_curt[(i, j)] * state.curtail_register[j]).sum();
        flows.push(state.flows[i] + batt + curt + drift[i] + w[i]);
    }
    let curtail_level = state.curtail_level.iter().zip(&state.curtail_register).map(|(a, b)| a + b).collect();
    let curtail_register = (0..l.n_g).map(|j| control[l.curtail_inputs().start + j]).collect();
    PlantState {
        flows,
        temperatures,
        battery_power: state.battery_power + du,
        battery_energy: state.battery_energy + sys.dt / 3600.0 * state.battery_power,
        curtail_register,
        curtail_level,
    }
}

/// Seeded disturbance source over the box `|w_flow| <= flow`, `|w_temp| <= temperature`.
#[derive(Debug, Clone)]
pub struct DisturbanceGen {
    pub seed: u64,
    pub mode: DisturbanceMode,
    pub flow: f64,
    pub temperature: f64,
    pub n_lines: usize,
    rng: ChaCha8Rng,
}

impl DisturbanceGen {
    pub fn new(seed: u64, mode: DisturbanceMode, flow: f64, temperature: f64, n_lines: usize) -> Self {
        Self { seed, mode, flow, temperature, n_lines, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn from_scenario(cfg: &ScenarioConfig, seed: u64) -> Self {
        Self::new(seed, cfg.simulation.disturbance_mode, cfg.disturbance.flow_mw, cfg.disturbance.temperature_c, cfg.lines.len())
    }

    fn draw(&mut self, bound: f64) -> f64 {
        match self.mode {
            DisturbanceMode::Zero => 0.0,
            DisturbanceMode::Uniform => self.rng.gen_range(-bound..=bound),
            DisturbanceMode::ExtremeVertex => {
                if self.rng.gen::<bool>() {
                    bound
                } else {
                    -bound
                }
            }
        }
    }

    /// Next disturbance, `[w_flow (n_l), w_temp (n_l)]`.
    pub fn sample(&mut self) -> DVector<f64> {
        let nl = self.n_lines;
        let mut w = DVector::zeros(2 * nl);
        for i in 0..nl {
            w[i] = self.draw(self.flow);
        }
        for i in 0..nl {
            w[nl + i] = self.draw(self.temperature);
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Optimal,
    /// Nominal problem infeasible; fallback applied.
    Infeasible,
    /// Iteration limit reached; fallback applied.
    MaxIter,
    /// Open loop, no controller.
    Free,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::MaxIter => "max_iter",
            StepStatus::Free => "free",
        }
    }

    pub fn is_flagged(&self) -> bool {
        matches!(self, StepStatus::Infeasible | StepStatus::MaxIter)
    }
}

/// Decision taken at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub nominal_x0: DVector<f64>,
    pub nominal_u0: DVector<f64>,
    pub applied: DVector<f64>,
    pub disturbance: DVector<f64>,
    pub status: StepStatus,
    /// Smallest slack against the tightened facets (NaN when free).
    pub margin: f64,
    pub iterations: usize,
    pub clamped: bool,
    /// `max_i |V⁻¹(x − x₀*)|_i − r_i`; non-positive inside the tube.
    pub tube_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStep {
    pub k: usize,
    pub time_s: f64,
    pub state: PlantState,
    /// `None` for the terminal entry.
    pub record: Option<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// `steps + 1` entries; the last one carries only the terminal state.
    pub steps: Vec<SimStep>,
    pub dt: f64,
    pub temperature_limits: Vec<f64>,
    pub tightened_temperature_limits: Vec<f64>,
    /// Wall-clock time per controlled step, seconds. Not part of any output
    /// file, so traces stay reproducible.
    pub wall_time_s: Vec<f64>,
}

impl SimTrace {
    pub fn n_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

fn drift_per_step(cfg: &ScenarioConfig, dt: f64) -> Vec<f64> {
    let nl = cfg.lines.len();
    let ramp = &cfg.simulation.flow_ramp_mw_per_min;
    (0..nl).map(|i| ramp.get(i).copied().unwrap_or(0.0) * dt / 60.0).collect()
}

fn check_energy(cfg: &ScenarioConfig, state: &PlantState, step: usize) -> Result<(), SimError> {
    let (min, max) = (cfg.battery.energy_min_mwh, cfg.battery.energy_max_mwh);
    let e = state.battery_energy;
    if e < min - ENERGY_TOL || e > max + ENERGY_TOL {
        return Err(SimError::BatteryBound { step, energy: e, min, max });
    }
    Ok(())
}

fn limits(cfg: &ScenarioConfig) -> Vec<f64> {
    cfg.lines.iter().map(|l| l.max_temperature_c).collect()
}

/// Robust closed loop.
pub fn run_closed_loop(cfg: &ScenarioConfig, ctrl: &TubeController, steps: usize, gen: &mut DisturbanceGen) -> Result<SimTrace, SimError> {
    let sys = &ctrl.sys;
    let l = sys.layout;
    if gen.n_lines != l.n_l {
        return Err(SimError::Dimension { what: "disturbance lines", expected: l.n_l, got: gen.n_lines });
    }
    let drift = drift_per_step(cfg, sys.dt);
    let mut state = PlantState::initial(cfg, sys);
    check_energy(cfg, &state, 0)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut wall = Vec::with_capacity(steps);
    // Shifted previous plan: (u₁*, x₁*) of the last successful solve.
    let mut backup: Option<(DVector<f64>, DVector<f64>)> = None;
    for k in 0..steps {
        let started = Instant::now();
        let x = state.to_deviation(sys);
        let sol = ctrl.solve(&x)?;
        let (nominal_x0, nominal_u0, applied, clamped, status) = if sol.status == QpStatus::Optimal {
            let act = ctrl.control(&sol, &x);
            backup = if sol.u_star.len() > 1 {
                Some((sol.u_star[1].clone(), sol.x_star[1].clone()))
            } else {
                Some((DVector::zeros(l.m()), sol.x_star[1].clone()))
            };
            (sol.x_star[0].clone(), sol.u_star[0].clone(), act.control, act.clamped, StepStatus::Optimal)
        } else {
            let status = if sol.status == QpStatus::MaxIter { StepStatus::MaxIter } else { StepStatus::Infeasible };
            warn!("step {k}: nominal problem {}, applying fallback", sol.status.as_str());
            let (u_prev, x_prev) = backup.take().unwrap_or_else(|| (DVector::zeros(l.m()), x.clone()));
            let battery = Some((l.battery_input(), state.battery_power, ctrl.battery_power_limit));
            let act = tube_law(&u_prev, &x_prev, &ctrl.gain, &x, battery);
            (x_prev, u_prev, act.control, act.clamped, status)
        };
        let tube_excess = ctrl.omega.excess(&(&x - &nominal_x0));
        let w = gen.sample();
        let next = plant_step(&state, &applied, &w, &drift, sys);
        wall.push(started.elapsed().as_secs_f64());
        out.push(SimStep {
            k,
            time_s: k as f64 * sys.dt,
            state,
            record: Some(StepRecord {
                nominal_x0,
                nominal_u0,
                applied,
                disturbance: w,
                status,
                margin: if status == StepStatus::Optimal { sol.margin } else { f64::NAN },
                iterations: sol.iterations,
                clamped,
                tube_excess,
            }),
        });
        state = next;
        check_energy(cfg, &state, k + 1)?;
    }
    out.push(SimStep { k: steps, time_s: steps as f64 * sys.dt, state, record: None });
    Ok(SimTrace {
        steps: out,
        dt: sys.dt,
        temperature_limits: limits(cfg),
        tightened_temperature_limits: ctrl.tightened_temperature_limits(),
        wall_time_s: wall,
    })
}

/// Open loop with every control held at zero.
pub fn run_free(cfg: &ScenarioConfig, steps: usize, gen: &mut DisturbanceGen) -> Result<SimTrace, SimError> {
    let (_, sys) = build_from_scenario(cfg)?;
    let l = sys.layout;
    if gen.n_lines != l.n_l {
        return Err(SimError::Dimension { what: "disturbance lines", expected: l.n_l, got: gen.n_lines });
    }
    let drift = drift_per_step(cfg, sys.dt);
    let zero = DVector::zeros(l.m());
    let mut state = PlantState::initial(cfg, &sys);
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let w = gen.sample();
        let next = plant_step(&state, &zero, &w, &drift, &sys);
        out.push(SimStep {
            k,
            time_s: k as f64 * sys.dt,
            state,
            record: Some(StepRecord {
                nominal_x0: DVector::zeros(l.n()),
                nominal_u0: zero.clone(),
                applied: zero.clone(),
                disturbance: w,
                status: StepStatus::Free,
                margin: f64::NAN,
                iterations: 0,
                clamped: false,
                tube_excess: f64::NAN,
            }),
        });
        state = next;
    }
    out.push(SimStep { k: steps, time_s: steps as f64 * sys.dt, state, record: None });
    Ok(SimTrace {
        steps: out,
        dt: sys.dt,
        temperature_limits: limits(cfg),
        tightened_temperature_limits: vec![f64::NAN; l.n_l],
        wall_time_s: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub steps: usize,
    pub max_temperature_c: Vec<f64>,
    /// `min_i (limit_i − max T_i)`.
    pub temperature_margin_c: f64,
    /// Number of (entry, line) pairs with `T > limit`.
    pub violations: usize,
    pub curtailed_energy_mwh: f64,
    pub battery_throughput_mwh: f64,
    pub infeasible_steps: usize,
    pub clamped_steps: usize,
    /// Steps where `x − x₀*` left Ω by more than 1e-9.
    pub tube_exits: usize,
    /// Smallest tightened-facet slack over solved steps.
    pub min_constraint_margin: Option<f64>,
}

/// Aggregate a trace. Temperatures are scanned over every entry including
/// the terminal one; energies over the applied steps.
pub fn summarize(trace: &SimTrace, limits: &[f64]) -> SummaryReport {
    let h = trace.dt / 3600.0;
    let nl = limits.len();
    let mut max_t = vec![f64::NEG_INFINITY; nl];
    let mut violations = 0;
    for s in &trace.steps {
        for i in 0..nl {
            let t = s.state.temperatures[i];
            max_t[i] = max_t[i].max(t);
            if t > limits[i] {
                violations += 1;
            }
        }
    }
    if trace.steps.is_empty() {
        max_t = vec![0.0; nl];
    }
    let mut curtailed = 0.0;
    let mut throughput = 0.0;
    let mut infeasible = 0;
    let mut clamped = 0;
    let mut tube_exits = 0;
    let mut min_margin: Option<f64> = None;
    for s in &trace.steps {
        let Some(r) = &s.record else { continue };
        curtailed += s.state.curtail_level.iter().sum::<f64>() * h;
        throughput += s.state.battery_power.abs() * h;
        if r.status.is_flagged() {
            infeasible += 1;
        }
        if r.clamped {
            clamped += 1;
        }
        if r.tube_excess > 1e-9 {
            tube_exits += 1;
        }
        if r.margin.is_finite() {
            min_margin = Some(min_margin.map_or(r.margin, |m| m.min(r.margin)));
        }
    }
    let temperature_margin_c = if trace.steps.is_empty() {
        0.0
    } else {
        limits.iter().zip(&max_t).map(|(l, t)| l - t).fold(f64::INFINITY, f64::min)
    };
    SummaryReport {
        steps: trace.n_steps(),
        max_temperature_c: max_t,
        temperature_margin_c,
        violations,
        curtailed_energy_mwh: curtailed,
        battery_throughput_mwh: throughput,
        infeasible_steps: infeasible,
        clamped_steps: clamped,
        tube_exits,
        min_constraint_margin: min_margin,
    }
}

//! Nominal finite-horizon problem with tightened constraints and the tube
//! control law `κ = u₀* + K(x − x₀*)`.

pub mod qp;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltimodel::{build_from_scenario, ModelError, SystemMatrices};
use crate::polytope::{HPolytope, SetError};
use crate::robust::{
    self, certify, kofman_rpi_reachable, make_poles_distinct, refine_rpi, synthesize_gain, Certificate, FeedbackGain,
    GainGroup, RobustError, RpiSet, TightenedSets,
};
use crate::scenario::{parse_input_ref, parse_state_ref, InputRef, ScenarioConfig, StateRef};
use qp::{QpProblem, QpSettings, QpStatus};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("feedback group {group}: {message}")]
    Group { group: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Diagonal of the control weight, one entry per input channel.
    pub q_cost: Vec<f64>,
    /// Weight on `‖x₀ − x‖²`, which makes the Hessian positive definite.
    pub regularization: f64,
    pub max_iter: usize,
}

impl MpcConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        let c = &cfg.controller;
        let mut q_cost = vec![c.battery_cost];
        q_cost.extend(&c.curtailment_cost);
        Self { horizon: c.horizon, q_cost, regularization: c.regularization, max_iter: c.qp_max_iter }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalSolution {
    pub u_star: Vec<DVector<f64>>,
    pub x_star: Vec<DVector<f64>>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Smallest slack of `x₀*` and `u₀*` against the tightened facets.
    pub margin: f64,
}

/// Condensed problem with the affine map from decision vector to states.
#[derive(Debug, Clone)]
pub struct NominalQp {
    pub qp: QpProblem,
    /// `x_j = S_j z + s_j` for `j = 0..=N`.
    pub state_maps: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    /// `ρ‖x‖²`, the constant dropped from the QP objective.
    pub objective_offset: f64,
}

impl NominalQp {
    pub fn states(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        self.state_maps.iter().map(|(s, o)| s * z + o).collect()
    }

    pub fn controls(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.horizon).map(|j| z.rows(self.n + j * self.m, self.m).into_owned()).collect()
    }
}

/// Build the condensed nominal problem for a measured state.
///
/// Decision `z = (x₀, u₀, …, u_{N−1})`; predicted states are affine in
/// `z` with the exogenous flow held at its measured value. Constraints:
/// `x_j ∈ X ⊖ Ω` for `j = 0..=N`, `u_j ∈ U ⊖ KΩ`, and `|V⁻¹(x − x₀)| <= r`
/// (rows with zero radius become equalities).
pub fn build_qp(
    sys: &SystemMatrices,
    sets: &TightenedSets,
    omega: &RpiSet,
    x_measured: &DVector<f64>,
    cfg: &MpcConfig,
) -> Result<NominalQp, RobustError> {
    let n = sys.n();
    let m = sys.m();
    let nh = cfg.horizon;
    let nz = n + nh * m;
    if robust::is_empty(&sets.x) {
        return Err(RobustError::EmptyTightenedSet("X ⊖ Ω".into()));
    }
    if robust::is_empty(&sets.u) {
        return Err(RobustError::EmptyTightenedSet("U ⊖ KΩ".into()));
    }
    let c = sys.affine_term(&sys.exogenous_flow(x_measured));

    let mut state_maps = Vec::with_capacity(nh + 1);
    let mut s = DMatrix::zeros(n, nz);
    s.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let mut o = DVector::zeros(n);
    state_maps.push((s.clone(), o.clone()));
    for j in 0..nh {
        let mut next = &sys.a * &s;
        let mut blk = next.view_mut((0, n + j * m), (n, m));
        blk += &sys.b;
        o = &sys.a * &o + &c;
        s = next;
        state_maps.push((s.clone(), o.clone()));
    }

    let gx = sets.x.normals();
    let hx = sets.x.offsets();
    let gu = sets.u.normals();
    let hu = sets.u.offsets();
    let tube_rows: Vec<usize> = (0..n).filter(|&i| omega.radius[i] > 0.0).collect();
    let eq_rows: Vec<usize> = (0..n).filter(|&i| omega.radius[i] <= 0.0).collect();
    let n_ineq = (nh + 1) * gx.nrows() + nh * gu.nrows() + 2 * tube_rows.len();
    let mut ga = DMatrix::zeros(n_ineq, nz);
    let mut gb = DVector::zeros(n_ineq);
    let mut row = 0;
    for (sj, oj) in &state_maps {
        let a = gx * sj;
        let b = hx - gx * oj;
        ga.view_mut((row, 0), (gx.nrows(), nz)).copy_from(&a);
        gb.rows_mut(row, gx.nrows()).copy_from(&b);
        row += gx.nrows();
    }
    for j in 0..nh {
        ga.view_mut((row, n + j * m), (gu.nrows(), m)).copy_from(gu);
        gb.rows_mut(row, gu.nrows()).copy_from(hu);
        row += gu.nrows();
    }
    let vx = &omega.v_inv * x_measured;
    for &i in &tube_rows {
        // V⁻¹_i x₀ <= r_i + V⁻¹_i x  and  −V⁻¹_i x₀ <= r_i − V⁻¹_i x
        for (sign, rhs) in [(1.0, omega.radius[i] + vx[i]), (-1.0, omega.radius[i] - vx[i])] {
            for k in 0..n {
                ga[(row, k)] = sign * omega.v_inv[(i, k)];
            }
            gb[row] = rhs;
            row += 1;
        }
    }
    let mut ea = DMatrix::zeros(eq_rows.len(), nz);
    let mut eb = DVector::zeros(eq_rows.len());
    for (r, &i) in eq_rows.iter().enumerate() {
        for k in 0..n {
            ea[(r, k)] = omega.v_inv[(i, k)];
        }
        eb[r] = vx[i];
    }

    let rho = cfg.regularization;
    let mut h = DMatrix::zeros(nz, nz);
    let mut f = DVector::zeros(nz);
    for i in 0..n {
        h[(i, i)] = 2.0 * rho;
        f[i] = -2.0 * rho * x_measured[i];
    }
    for j in 0..nh {
        for k in 0..m {
            let idx = n + j * m + k;
            h[(idx, idx)] = 2.0 * cfg.q_cost[k];
        }
    }
    let qp = QpProblem { hessian: h, linear: f, ineq_a: ga, ineq_b: gb, eq_a: ea, eq_b: eb };
    Ok(NominalQp {
        qp,
        state_maps,
        n,
        m,
        horizon: nh,
        objective_offset: rho * x_measured.norm_squared(),
    })
}

/// Solve the nominal problem and unpack the trajectory.
pub fn solve_qp(nominal: &NominalQp, sets: &TightenedSets, cfg: &MpcConfig) -> NominalSolution {
    let settings = QpSettings { max_iter: cfg.max_iter, ..QpSettings::default() };
    let sol = match qp::solve(&nominal.qp, &settings) {
        Ok(s) => s,
        Err(_) => {
            return NominalSolution {
                u_star: Vec::new(),
                x_star: Vec::new(),
                objective: f64::NAN,
                status: QpStatus::Infeasible,
                iterations: 0,
                margin: f64::NAN,
            }
        }
    };
    let x_star = nominal.states(&sol.z);
    let u_star = nominal.controls(&sol.z);
    let margin = if x_star.is_empty() || u_star.is_empty() {
        f64::NAN
    } else {
        let mx = -sets.x.max_violation(&x_star[0]);
        let mu = -sets.u.max_violation(&u_star[0]);
        mx.min(mu)
    };
    NominalSolution {
        objective: sol.objective + nominal.objective_offset,
        status: sol.status,
        iterations: sol.iterations,
        margin,
        u_star,
        x_star,
    }
}

/// Applied control with the battery safety clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeAction {
    pub control: DVector<f64>,
    pub clamped: bool,
}

/// `κ = u₀* + K(x − x₀*)`, with the battery step clamped so that the
/// battery set-point stays within `±p_bar`.
pub fn tube_law(u0: &DVector<f64>, x0: &DVector<f64>, k: &FeedbackGain, x_measured: &DVector<f64>, battery: Option<(usize, f64, f64)>) -> TubeAction {
    let mut control = u0 + &k.k * (x_measured - x0);
    let mut clamped = false;
    if let Some((idx, u_batt, p_bar)) = battery {
        let lo = -p_bar - u_batt;
        let hi = p_bar - u_batt;
        let v = control[idx];
        if v < lo || v > hi {
            control[idx] = v.clamp(lo, hi);
            clamped = true;
            debug!("battery step {v} clamped to [{lo}, {hi}]");
        }
    }
    TubeAction { control, clamped }
}

/// Everything computed once before closed-loop operation.
#[derive(Debug, Clone)]
pub struct TubeController {
    pub sys: SystemMatrices,
    pub gain: FeedbackGain,
    pub omega: RpiSet,
    /// Untightened state and input sets.
    pub x_set: HPolytope,
    pub u_set: HPolytope,
    pub tightened: TightenedSets,
    pub cfg: MpcConfig,
    pub groups: Vec<GainGroup>,
    pub battery_power_limit: f64,
}

/// Quantities reported after synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub closed_loop_eigenvalues: Vec<f64>,
    pub requested_poles: Vec<f64>,
    pub radius: Vec<f64>,
    /// Absolute tightened temperature limit per line, °C.
    pub tightened_temperature_limits: Vec<f64>,
    /// Half-width of the tube's bounding box on each temperature, °C.
    pub temperature_margins: Vec<f64>,
    /// `vol(U ⊖ KΩ) / vol(U)`.
    pub input_volume_ratio: f64,
    /// Fraction of each input range kept after tightening.
    pub input_width_ratios: Vec<f64>,
    pub certificate: Certificate,
}

/// Resolve the scenario's feedback groups to state and input indices.
pub fn resolve_groups(cfg: &ScenarioConfig, sys: &SystemMatrices) -> Result<Vec<GainGroup>, SynthesisError> {
    let l = sys.layout;
    let lines: Vec<&str> = cfg.lines.iter().map(|x| x.name.as_str()).collect();
    let sites: Vec<&str> = cfg.curtailment.iter().map(|x| x.site.as_str()).collect();
    let mut out = Vec::new();
    for (gi, g) in cfg.controller.feedback_groups.iter().enumerate() {
        let err = |message: String| SynthesisError::Group { group: gi, message };
        let mut inputs = Vec::new();
        for s in &g.inputs {
            for r in parse_input_ref(s, &sites).map_err(err)? {
                inputs.push(match r {
                    InputRef::Battery => l.battery_input(),
                    InputRef::Curtail(i) => l.curtail_inputs().start + i,
                });
            }
        }
        let mut states = Vec::new();
        for s in &g.states {
            let pick = |range: std::ops::Range<usize>, member: Option<usize>| -> Vec<usize> {
                match member {
                    Some(i) => vec![range.start + i],
                    None => range.collect(),
                }
            };
            states.extend(match parse_state_ref(s, &lines, &sites).map_err(err)? {
                StateRef::Flow(i) => pick(l.flow(), i),
                StateRef::Temperature(i) => pick(l.temperature(), i),
                StateRef::BatteryPower => vec![l.battery_power()],
                StateRef::BatteryEnergy => vec![l.battery_energy()],
                StateRef::CurtailRegister(i) => pick(l.curtail_register(), i),
                StateRef::CurtailLevel(i) => pick(l.curtail_level(), i),
            });
        }
        let mut sorted = states.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != states.len() {
            return Err(SynthesisError::Group { group: gi, message: "a state is listed twice".into() });
        }
        out.push(GainGroup { inputs, states, poles: g.poles.clone() });
    }
    Ok(out)
}

/// Untightened constraint sets in deviation coordinates.
///
/// `X`: `T̃_i <= T_max,i − T₀,i`, `|u_batt| <= P̄`, `E ∈ [E_min, E_max]`,
/// `ℓ_j ∈ [0, cap_j]`. `U`: `|Δu_batt| <= P̄`, `|Δu_curt,j| <= cap_j`.
pub fn constraint_sets(cfg: &ScenarioConfig, sys: &SystemMatrices) -> Result<(HPolytope, HPolytope), SetError> {
    let l = sys.layout;
    let n = l.n();
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for (i, line) in cfg.lines.iter().enumerate() {
        rows.push((l.temperature().start + i, 1.0, line.max_temperature_c - sys.lp[i].t0));
    }
    let p = cfg.battery.max_power_mw;
    rows.push((l.battery_power(), 1.0, p));
    rows.push((l.battery_power(), -1.0, p));
    rows.push((l.battery_energy(), 1.0, cfg.battery.energy_max_mwh));
    rows.push((l.battery_energy(), -1.0, -cfg.battery.energy_min_mwh));
    for (j, c) in cfg.curtailment.iter().enumerate() {
        rows.push((l.curtail_level().start + j, 1.0, c.cap_mw));
        rows.push((l.curtail_level().start + j, -1.0, 0.0));
    }
    let mut gx = DMatrix::zeros(rows.len(), n);
    let mut hx = DVector::zeros(rows.len());
    for (r, &(idx, sign, off)) in rows.iter().enumerate() {
        gx[(r, idx)] = sign;
        hx[r] = off;
    }
    let mut lo = vec![-p];
    let mut hi = vec![p];
    for c in &cfg.curtailment {
        lo.push(-c.cap_mw);
        hi.push(c.cap_mw);
    }
    let u = crate::polytope::Box::from_slices(&lo, &hi)?.to_hpolytope();
    Ok((HPolytope::new(gx, hx)?, u))
}

impl TubeController {
    /// Gain, tube section and tightened sets for a validated scenario.
    pub fn synthesize(cfg: &ScenarioConfig) -> Result<Self, SynthesisError> {
        let (_, sys) = build_from_scenario(cfg)?;
        let mut groups = resolve_groups(cfg, &sys)?;
        make_poles_distinct(&mut groups);
        let gain = synthesize_gain(&sys.a, &sys.b, &groups)?;
        let a_k = &sys.a + &sys.b * &gain.k;
        let b_w = DMatrix::identity(sys.n(), sys.n());
        let mut omega = kofman_rpi_reachable(&a_k, &b_w, &sys.w_bar, cfg.controller.theta)?;
        if cfg.controller.refine_iterations > 0 {
            omega = refine_rpi(&a_k, &b_w, &sys.w_bar, &omega, cfg.controller.refine_iterations)?;
        }
        Self::assemble(cfg, sys, gain, omega, groups)
    }

    /// Rebuild a controller from a stored gain and tube section; the
    /// tightened sets are recomputed from the scenario.
    pub fn from_parts(cfg: &ScenarioConfig, k: DMatrix<f64>, omega: RpiSet) -> Result<Self, SynthesisError> {
        let (_, sys) = build_from_scenario(cfg)?;
        let groups = resolve_groups(cfg, &sys)?;
        if k.shape() != (sys.m(), sys.n()) || omega.dim() != sys.n() {
            return Err(RobustError::Dimension("stored gain or tube does not match the scenario".into()).into());
        }
        let closed_loop = robust::verify_gain(&sys.a, &sys.b, &k, &[])?;
        Self::assemble(cfg, sys, FeedbackGain { k, closed_loop }, omega, groups)
    }

    fn assemble(cfg: &ScenarioConfig, sys: SystemMatrices, gain: FeedbackGain, omega: RpiSet, groups: Vec<GainGroup>) -> Result<Self, SynthesisError> {
        let (x_set, u_set) = constraint_sets(cfg, &sys)?;
        let tightened = robust::tighten_separated(&x_set, &u_set, &gain.k, &omega)?;
        Ok(Self {
            sys,
            gain,
            omega,
            x_set,
            u_set,
            tightened,
            cfg: MpcConfig::from_scenario(cfg),
            groups,
            battery_power_limit: cfg.battery.max_power_mw,
        })
    }

    pub fn a_k(&self) -> DMatrix<f64> {
        &self.sys.a + &self.sys.b * &self.gain.k
    }

    /// Exact invariance margin of Ω (non-positive when invariant).
    pub fn invariance_excess(&self) -> f64 {
        let n = self.sys.n();
        robust::invariance_excess(&self.a_k(), &DMatrix::identity(n, n), &self.sys.w_bar, &self.omega)
    }

    pub fn certify(&self, samples: usize, seed: u64) -> Certificate {
        let n = self.sys.n();
        certify(&self.a_k(), &DMatrix::identity(n, n), &self.sys.w_bar, &self.omega, samples, seed)
    }

    /// Tightened upper temperature limit per line, °C (absolute).
    pub fn tightened_temperature_limits(&self) -> Vec<f64> {
        let l = self.sys.layout;
        let hw = self.omega.bounding_half_widths();
        let mut out = Vec::with_capacity(l.n_l);
        for i in 0..l.n_l {
            let idx = l.temperature().start + i;
            let limit = (0..self.x_set.n_facets())
                .filter(|&r| self.x_set.normals()[(r, idx)] == 1.0)
                .map(|r| self.x_set.offsets()[r])
                .fold(f64::INFINITY, f64::min);
            out.push(self.sys.lp[i].t0 + limit - hw[idx]);
        }
        out
    }

    pub fn report(&self, samples: usize, seed: u64) -> SynthesisReport {
        let l = self.sys.layout;
        let hw = self.omega.bounding_half_widths();
        let ub = self.u_set.as_box();
        let tb = self.tightened.u.as_box();
        let input_width_ratios = match (&ub, &tb) {
            (Some(u), Some(t)) if !t.is_empty() => (0..u.dim()).map(|i| t.widths()[i] / u.widths()[i]).collect(),
            _ => vec![0.0; l.m()],
        };
        SynthesisReport {
            closed_loop_eigenvalues: self.gain.closed_loop.clone(),
            requested_poles: self.groups.iter().flat_map(|g| g.poles.iter().copied()).collect(),
            radius: self.omega.radius.iter().copied().collect(),
            tightened_temperature_limits: self.tightened_temperature_limits(),
            temperature_margins: l.temperature().map(|i| hw[i]).collect(),
            input_volume_ratio: robust::volume_ratio(&self.tightened.u, &self.u_set).unwrap_or(0.0),
            input_width_ratios,
            certificate: self.certify(samples, seed),
        }
    }

    /// Solve the nominal problem at a measured deviation state.
    pub fn solve(&self, x_measured: &DVector<f64>) -> Result<NominalSolution, RobustError> {
        let nominal = build_qp(&self.sys, &self.tightened, &self.omega, x_measured, &self.cfg)?;
        Ok(solve_qp(&nominal, &self.tightened, &self.cfg))
    }

    /// Tube law with the battery clamp for the current battery set-point.
    pub fn control(&self, sol: &NominalSolution, x_measured: &DVector<f64>) -> TubeAction {
        let l = self.sys.layout;
        tube_law(
            &sol.u_star[0],
            &sol.x_star[0],
            &self.gain,
            x_measured,
            Some((l.battery_input(), x_measured[l.battery_power()], self.battery_power_limit)),
        )
    }
}

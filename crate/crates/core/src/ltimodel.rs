//! Linear prediction model used by the controller.
//!
//! State layout, in deviation coordinates for flows and temperatures:
//!
//! ```text
//! x = [ F̃ (n_l) | T̃ (n_l) | u_batt | E_batt | d_curt (n_g) | ℓ_curt (n_g) ]
//! u = [ Δu_batt | Δu_curt (n_g) ]
//! ```
//!
//! Block rows:
//!
//! ```text
//! F̃⁺     = z + L_batt·(u_batt + Δu_batt) + L_curt·(ℓ_curt + d_curt)
//! T̃⁺     = (1−β)T̃ + 2F₀α̃·F̃ + 2F₀α̃·L_batt·Δu_batt
//! u_batt⁺ = u_batt + Δu_batt
//! E_batt⁺ = E_batt + Δt·u_batt
//! d_curt⁺ = Δu_curt
//! ℓ_curt⁺ = ℓ_curt + d_curt
//! ```
//!
//! `z = F̃ − L_batt·u_batt − L_curt·ℓ_curt` is the part of the flow not
//! explained by the controls. It is measured at every step and held
//! constant over the prediction horizon, entering as an affine term. One step
//! of this model equals `F̃⁺ = F̃ + L_batt·Δu_batt + L_curt·d_curt`.
//! Keeping `z` outside the state removes an uncontrollable integrator that
//! would otherwise make the pair (A, B) unstabilizable.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{load_network, GridError, NetworkModel};
use crate::scenario::ScenarioConfig;
use crate::thermal::{self, LinearizationPoint, ThermalCoefficients, ThermalError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("beta for line {line} is {beta}, outside (0, 1)")]
    Beta { line: usize, beta: f64 },
    #[error("value {0} is outside the image of the battery power range")]
    OutOfImage(f64),
    #[error("scales must be strictly positive")]
    BadScale,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_l: usize,
    pub n_g: usize,
}

impl StateLayout {
    pub fn new(n_l: usize, n_g: usize) -> Self {
        Self { n_l, n_g }
    }

    pub fn n(&self) -> usize {
        2 * self.n_l + 2 + 2 * self.n_g
    }

    pub fn m(&self) -> usize {
        1 + self.n_g
    }

    pub fn flow(&self) -> Range<usize> {
        0..self.n_l
    }

    pub fn temperature(&self) -> Range<usize> {
        self.n_l..2 * self.n_l
    }

    pub fn battery_power(&self) -> usize {
        2 * self.n_l
    }

    pub fn battery_energy(&self) -> usize {
        2 * self.n_l + 1
    }

    pub fn curtail_register(&self) -> Range<usize> {
        2 * self.n_l + 2..2 * self.n_l + 2 + self.n_g
    }

    pub fn curtail_level(&self) -> Range<usize> {
        2 * self.n_l + 2 + self.n_g..self.n()
    }

    /// Index of the battery input.
    pub fn battery_input(&self) -> usize {
        0
    }

    pub fn curtail_inputs(&self) -> Range<usize> {
        1..1 + self.n_g
    }

    /// Block ranges in order; they partition `0..n`.
    pub fn blocks(&self) -> [Range<usize>; 6] {
        let bp = self.battery_power();
        let be = self.battery_energy();
        [self.flow(), self.temperature(), bp..bp + 1, be..be + 1, self.curtail_register(), self.curtail_level()]
    }
}

/// Disturbance magnitudes per step, before mapping onto the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBounds {
    pub flow: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Per-state disturbance bound, including the linearization error on
    /// the temperature rows.
    pub w_bar: DVector<f64>,
    pub layout: StateLayout,
    pub lp: Vec<LinearizationPoint>,
    pub coeffs: Vec<ThermalCoefficients>,
    pub l_batt: DVector<f64>,
    pub l_curt: DMatrix<f64>,
    /// Linearization error bound added to each temperature row of `w_bar`.
    pub linearization_bound: Vec<f64>,
    pub dt: f64,
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn m(&self) -> usize {
        self.layout.m()
    }

    /// Measured exogenous flow `z = F̃ − L_batt·u_batt − L_curt·ℓ_curt`.
    pub fn exogenous_flow(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = &self.layout;
        let f = x.rows(l.flow().start, l.n_l).into_owned();
        let lc = x.rows(l.curtail_level().start, l.n_g).into_owned();
        f - &self.l_batt * x[l.battery_power()] - &self.l_curt * lc
    }

    /// Affine term of the prediction model for a given exogenous flow.
    pub fn affine_term(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut c = DVector::zeros(self.n());
        c.rows_mut(0, self.layout.n_l).copy_from(z);
        c
    }

    /// `A x + B u + c(z(x))`: one prediction step from a measured state.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + self.affine_term(&self.exogenous_flow(x))
    }
}

/// Assemble the prediction model. `w` holds the physical disturbance
/// bounds; `lin_bound[i]` is added to line `i`'s temperature bound.
pub fn build_lti(
    net: &NetworkModel,
    coeffs: &[ThermalCoefficients],
    lp: &[LinearizationPoint],
    dt: f64,
    w: DisturbanceBounds,
    lin_bound: &[f64],
) -> Result<SystemMatrices, ModelError> {
    let layout = StateLayout::new(net.n_lines(), net.n_sites());
    let (nl, ng) = (layout.n_l, layout.n_g);
    if coeffs.len() != nl || lp.len() != nl || lin_bound.len() != nl {
        return Err(ModelError::Dimension(format!(
            "{nl} lines but {} coefficient sets, {} linearization points, {} bounds",
            coeffs.len(),
            lp.len(),
            lin_bound.len()
        )));
    }
    for (i, c) in coeffs.iter().enumerate() {
        if !(c.beta > 0.0 && c.beta < 1.0) {
            return Err(ModelError::Beta { line: i, beta: c.beta });
        }
        if (c.dt - dt).abs() > 1e-12 * dt {
            return Err(ModelError::Dimension(format!("line {i} uses time step {} not {dt}", c.dt)));
        }
    }
    let n = layout.n();
    let m = layout.m();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let (fl, tl) = (layout.flow().start, layout.temperature().start);
    let (ub, eb) = (layout.battery_power(), layout.battery_energy());
    let (dr, lv) = (layout.curtail_register().start, layout.curtail_level().start);
    let bi = layout.battery_input();

    for i in 0..nl {
        a[(fl + i, ub)] = net.l_batt[i];
        b[(fl + i, bi)] = net.l_batt[i];
        for j in 0..ng {
            a[(fl + i, dr + j)] = net.l_curt[(i, j)];
            a[(fl + i, lv + j)] = net.l_curt[(i, j)];
        }
        let g = 2.0 * lp[i].f0 * coeffs[i].alpha_mw();
        a[(tl + i, fl + i)] = g;
        a[(tl + i, tl + i)] = 1.0 - coeffs[i].beta;
        b[(tl + i, bi)] = g * net.l_batt[i];
    }
    a[(ub, ub)] = 1.0;
    b[(ub, bi)] = 1.0;
    a[(eb, ub)] = dt / 3600.0;
    a[(eb, eb)] = 1.0;
    for j in 0..ng {
        b[(dr + j, 1 + j)] = 1.0;
        a[(lv + j, lv + j)] = 1.0;
        a[(lv + j, dr + j)] = 1.0;
    }

    let mut w_bar = DVector::zeros(n);
    for i in 0..nl {
        w_bar[fl + i] = w.flow;
        w_bar[tl + i] = w.temperature + lin_bound[i];
    }
    Ok(SystemMatrices {
        a,
        b,
        w_bar,
        layout,
        lp: lp.to_vec(),
        coeffs: coeffs.to_vec(),
        l_batt: net.l_batt.clone(),
        l_curt: net.l_curt.clone(),
        linearization_bound: lin_bound.to_vec(),
        dt,
    })
}

/// Thermal coefficients and linearization points for every line.
pub fn line_thermal(cfg: &ScenarioConfig) -> Result<(Vec<ThermalCoefficients>, Vec<LinearizationPoint>), ModelError> {
    let dt = cfg.controller.time_step_s;
    let mut coeffs = Vec::new();
    let mut lps = Vec::new();
    for line in &cfg.lines {
        let p = (&cfg.conductors[&line.conductor]).into();
        let w = (&cfg.weather[&line.weather]).into();
        let c = thermal::coefficients(&p, &w, dt)?;
        lps.push(LinearizationPoint::at(line.linearization_flow_mw, &c)?);
        coeffs.push(c);
    }
    Ok((coeffs, lps))
}

/// Network and prediction model for a validated scenario.
pub fn build_from_scenario(cfg: &ScenarioConfig) -> Result<(NetworkModel, SystemMatrices), ModelError> {
    let net = load_network(cfg)?;
    let (coeffs, lps) = line_thermal(cfg)?;
    let frac = cfg.disturbance.flow_deviation_fraction;
    let lin: Vec<f64> = (0..net.n_lines())
        .map(|i| {
            thermal::linearization_error_bound(
                frac * lps[i].f0,
                cfg.battery.max_power_mw,
                net.l_batt[i],
                &lps[i],
                &coeffs[i],
            )
        })
        .collect();
    let w = DisturbanceBounds { flow: cfg.disturbance.flow_mw, temperature: cfg.disturbance.temperature_c };
    let sys = build_lti(&net, &coeffs, &lps, cfg.controller.time_step_s, w, &lin)?;
    Ok((net, sys))
}

/// `ũ = 2F₀·L·Δu + (L·Δu)²`, the exact thermal effect of a battery step.
pub fn u_tilde_forward(du_batt: f64, f0: f64, l_batt: f64) -> f64 {
    let s = l_batt * du_batt;
    2.0 * f0 * s + s * s
}

/// Preimage of [`u_tilde_forward`] on `[−P̄, P̄]`, on the root branch through 0.
pub fn u_tilde_inverse(u_tilde: f64, f0: f64, l_batt: f64, p_bar: f64) -> Result<f64, ModelError> {
    if l_batt == 0.0 {
        return if u_tilde == 0.0 { Ok(0.0) } else { Err(ModelError::OutOfImage(u_tilde)) };
    }
    let disc = f0 * f0 + u_tilde;
    if disc < 0.0 {
        return Err(ModelError::OutOfImage(u_tilde));
    }
    // Stable form of −F₀ + √(F₀² + ũ).
    let s = u_tilde / (f0 + disc.sqrt());
    let du = s / l_batt;
    if du.abs() > p_bar * (1.0 + 1e-12) {
        return Err(ModelError::OutOfImage(u_tilde));
    }
    Ok(du)
}

/// Positive scale per state block, in the order of [`StateLayout::blocks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockScales(pub [f64; 6]);

impl BlockScales {
    pub fn identity() -> Self {
        Self([1.0; 6])
    }
}

/// Similarity transform `x = D·x'`: returns `D⁻¹AD`, `D⁻¹B·D_u`, `D⁻¹w̄`.
pub fn scale_model(sys: &SystemMatrices, scales: BlockScales, input_scales: &[f64]) -> Result<SystemMatrices, ModelError> {
    if scales.0.iter().chain(input_scales).any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(ModelError::BadScale);
    }
    if input_scales.len() != sys.m() {
        return Err(ModelError::Dimension(format!("{} input scales for {} inputs", input_scales.len(), sys.m())));
    }
    let d = state_scale_vector(&sys.layout, scales);
    let mut out = sys.clone();
    for i in 0..sys.n() {
        for j in 0..sys.n() {
            out.a[(i, j)] = sys.a[(i, j)] * d[j] / d[i];
        }
        for j in 0..sys.m() {
            out.b[(i, j)] = sys.b[(i, j)] * input_scales[j] / d[i];
        }
        out.w_bar[i] = sys.w_bar[i] / d[i];
    }
    Ok(out)
}

/// Diagonal of `D` for [`scale_model`].
pub fn state_scale_vector(layout: &StateLayout, scales: BlockScales) -> DVector<f64> {
    let mut d = DVector::from_element(layout.n(), 1.0);
    for (block, s) in layout.blocks().iter().zip(scales.0) {
        for i in block.clone() {
            d[i] = s;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::isle_jourdain;

    fn reference_sys() -> SystemMatrices {
        build_from_scenario(&isle_jourdain()).unwrap().1
    }

    #[test]
    fn layout_partitions_state() {
        let l = StateLayout::new(2, 2);
        assert_eq!((l.n(), l.m()), (10, 3));
        let mut covered = vec![0; l.n()];
        for b in l.blocks() {
            for i in b {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn structural_pattern() {
        let s = reference_sys();
        let l = s.layout;
        let mut a_nz = vec![vec![false; 10]; 10];
        let mut b_nz = vec![vec![false; 3]; 10];
        for i in l.flow() {
            a_nz[i][l.battery_power()] = true;
            for j in l.curtail_register().chain(l.curtail_level()) {
                a_nz[i][j] = true;
            }
            b_nz[i][0] = true;
        }
        for (k, i) in l.temperature().enumerate() {
            a_nz[i][k] = true;
            a_nz[i][i] = true;
            b_nz[i][0] = true;
        }
        a_nz[l.battery_power()][l.battery_power()] = true;
        b_nz[l.battery_power()][0] = true;
        a_nz[l.battery_energy()][l.battery_power()] = true;
        a_nz[l.battery_energy()][l.battery_energy()] = true;
        for (k, i) in l.curtail_register().enumerate() {
            b_nz[i][1 + k] = true;
        }
        for (k, i) in l.curtail_level().enumerate() {
            a_nz[i][i] = true;
            a_nz[i][l.curtail_register().start + k] = true;
        }
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(s.a[(i, j)] != 0.0, a_nz[i][j], "A[{i},{j}]");
            }
            for j in 0..3 {
                assert_eq!(s.b[(i, j)] != 0.0, b_nz[i][j], "B[{i},{j}]");
            }
        }
    }

    #[test]
    fn origin_is_fixed_without_input() {
        let s = reference_sys();
        let x = DVector::zeros(10);
        assert_eq!(s.predict(&x, &DVector::zeros(3)), x);
    }

    #[test]
    fn one_step_flow_row_is_incremental() {
        let s = reference_sys();
        let x = DVector::from_fn(10, |i, _| 0.3 * i as f64 - 1.0);
        let u = DVector::from_vec(vec![2.0, 1.0, -0.5]);
        let next = s.predict(&x, &u);
        let l = s.layout;
        let d = x.rows(l.curtail_register().start, 2).into_owned();
        let expect = x.rows(0, 2).into_owned() + &s.l_batt * u[0] + &s.l_curt * d;
        assert!((next.rows(0, 2) - expect).amax() < 1e-12);
    }

    #[test]
    fn disturbance_support() {
        let s = reference_sys();
        let l = s.layout;
        for i in l.battery_power()..l.n() {
            assert_eq!(s.w_bar[i], 0.0);
        }
        assert!(s.w_bar.rows(l.temperature().start, 2).iter().all(|&v| v > 0.05));
    }

    #[test]
    fn u_tilde_endpoints_with_unit_ptdf() {
        let (f0, p) = (78.0, 15.0);
        assert_eq!(u_tilde_forward(0.0, f0, 1.0), 0.0);
        assert!((u_tilde_forward(p, f0, 1.0) - (p * p + 2.0 * f0 * p)).abs() < 1e-12);
        assert!((u_tilde_forward(-p, f0, 1.0) - (p * p - 2.0 * f0 * p)).abs() < 1e-12);
        let hi = u_tilde_forward(p, f0, 0.36);
        assert!((u_tilde_inverse(hi, f0, 0.36, p).unwrap() - p).abs() < 1e-12);
        assert_eq!(u_tilde_inverse(0.0, f0, 0.36, p).unwrap(), 0.0);
        assert!(u_tilde_inverse(hi * 1.01, f0, 0.36, p).is_err());
    }

    #[test]
    fn identity_scaling() {
        let s = reference_sys();
        let t = scale_model(&s, BlockScales::identity(), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s, t);
        assert!(scale_model(&s, BlockScales([1.0, 0.0, 1.0, 1.0, 1.0, 1.0]), &[1.0; 3]).is_err());
    }
}

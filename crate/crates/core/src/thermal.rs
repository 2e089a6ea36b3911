//! Conductor heat balance.
//!
//! The explicit one-minute recursion is
//! `T⁺ = (1−β)T + α̃F² + γ`, with flows in MW and temperatures in °C at the
//! interface. SI conversion happens in [`coefficients`] only.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{ConductorConfig, WeatherConfig};

const MW: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("time step too large for explicit recursion (beta = {0})")]
    UnstableStep(f64),
    #[error("invalid parameter: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductorParams {
    pub m: f64,
    pub c: f64,
    pub d: f64,
    pub r: f64,
    pub alpha_s: f64,
    pub lambda_f: f64,
}

impl From<&ConductorConfig> for ConductorParams {
    fn from(c: &ConductorConfig) -> Self {
        Self {
            m: c.mass_kg_per_m,
            c: c.heat_capacity_j_per_kg_k,
            d: c.diameter_m,
            r: c.resistance_ohm_per_m,
            alpha_s: c.absorbance,
            lambda_f: c.air_conductivity_w_per_k_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub nu: f64,
    pub t_a: f64,
    pub i_t: f64,
    pub q0: f64,
    pub v0: f64,
}

impl From<&WeatherConfig> for WeatherSample {
    fn from(w: &WeatherConfig) -> Self {
        Self { nu: w.nusselt, t_a: w.ambient_c, i_t: w.radiation_w_per_m2, q0: w.reactive_power_var, v0: w.voltage_v }
    }
}

/// Coefficients of the discrete recursion. `alpha_tilde` is in K per W²
/// (SI); [`ThermalCoefficients::alpha_mw`] gives the per-MW² value used with
/// MW flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCoefficients {
    pub alpha_tilde: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl ThermalCoefficients {
    /// α̃ expressed in K per MW².
    pub fn alpha_mw(&self) -> f64 {
        self.alpha_tilde * MW * MW
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationPoint {
    pub f0: f64,
    pub t0: f64,
}

impl LinearizationPoint {
    /// Linearize at `f0`, taking the matching equilibrium temperature.
    pub fn at(f0: f64, coeffs: &ThermalCoefficients) -> Result<Self, ThermalError> {
        if !(f0 >= 1.0) {
            return Err(ThermalError::Invalid("linearization flow must be at least 1 MW"));
        }
        Ok(Self { f0, t0: equilibrium_temperature(f0, coeffs) })
    }
}

pub fn coefficients(p: &ConductorParams, w: &WeatherSample, dt: f64) -> Result<ThermalCoefficients, ThermalError> {
    if !(dt > 0.0) {
        return Err(ThermalError::Invalid("time step must be positive"));
    }
    if !(p.m > 0.0 && p.c > 0.0 && p.d > 0.0 && p.r > 0.0 && p.lambda_f > 0.0) {
        return Err(ThermalError::Invalid("conductor constants must be positive"));
    }
    if !(w.v0 > 0.0 && w.nu >= 0.0 && w.i_t >= 0.0) {
        return Err(ThermalError::Invalid("weather sample out of range"));
    }
    let mc = p.m * p.c;
    let three_v2 = 3.0 * w.v0 * w.v0;
    let alpha_tilde = p.r * dt / (three_v2 * mc);
    let beta = PI * p.lambda_f * w.nu / mc * dt;
    let gamma = dt / mc * (p.alpha_s * p.d * w.i_t + PI * p.lambda_f * w.nu * w.t_a + p.r * w.q0 * w.q0 / three_v2);
    if beta >= 1.0 {
        return Err(ThermalError::UnstableStep(beta));
    }
    Ok(ThermalCoefficients { alpha_tilde, beta, gamma, dt })
}

/// One step of the nonlinear plant; `batt_flow_delta` is the immediate flow
/// change caused by the battery (`L_batt·Δu_batt`), MW.
pub fn step_nonlinear(t: f64, f: f64, coeffs: &ThermalCoefficients, batt_flow_delta: f64, w_temp: f64) -> f64 {
    let flow = f + batt_flow_delta;
    (1.0 - coeffs.beta) * t + coeffs.alpha_mw() * flow * flow + coeffs.gamma + w_temp
}

/// Fixed point `(α̃F² + γ)/β` of the recursion at constant flow.
pub fn equilibrium_temperature(f: f64, coeffs: &ThermalCoefficients) -> f64 {
    (coeffs.alpha_mw() * f * f + coeffs.gamma) / coeffs.beta
}

/// Joule, solar and convective power per metre, W/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatingTerms {
    pub joule: f64,
    pub solar: f64,
    pub convective: f64,
}

pub fn heating_terms(t: f64, f: f64, p: &ConductorParams, w: &WeatherSample) -> HeatingTerms {
    let s = f * MW;
    let current_sq = (s * s + w.q0 * w.q0) / (3.0 * w.v0 * w.v0);
    HeatingTerms {
        joule: p.r * current_sq,
        solar: p.alpha_s * p.d * w.i_t,
        convective: PI * p.lambda_f * w.nu * (t - w.t_a),
    }
}

/// Worst-case one-step gap between the nonlinear temperature recursion and
/// its linearization at `lp`, over `|F − F₀| <= f_dev_max` and
/// `|Δu_batt| <= batt_max`: `α̃(f_dev_max + |L_batt|·batt_max)²`.
pub fn linearization_error_bound(
    f_dev_max: f64,
    batt_max: f64,
    l_batt: f64,
    _lp: &LinearizationPoint,
    coeffs: &ThermalCoefficients,
) -> f64 {
    let span = f_dev_max + l_batt.abs() * batt_max;
    coeffs.alpha_mw() * span * span
}

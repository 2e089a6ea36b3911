//! Versioned controller artifact: gain, tube section and tightened offsets,
//! tied to the scenario it was synthesized for.

use std::path::Path;

use linetube::mpc::{SynthesisReport, TubeController};
use linetube::robust::{RpiSet, CERTIFICATE_TOL};
use linetube::ScenarioConfig;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARTIFACT_VERSION: u32 = 1;

/// Tolerance when comparing stored and recomputed tightened offsets.
const OFFSET_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse controller file: {0}")]
    Parse(String),
    #[error("controller format version {0} is not supported")]
    Version(u32),
    #[error("controller was synthesized for scenario hash {stored}, current scenario hashes to {current}")]
    HashMismatch { stored: String, current: String },
    #[error("stored matrix {name} has {got} entries, expected {expected}")]
    Shape { name: &'static str, expected: usize, got: usize },
    #[error("stored tube is not invariant (excess {0:.3e})")]
    NotInvariant(f64),
    #[error("stored tightened offsets differ from the recomputed ones by {0:.3e}")]
    OffsetMismatch(f64),
    #[error(transparent)]
    Synthesis(#[from] linetube::SynthesisError),
}

/// Dense matrix as a row-major list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl StoredMatrix {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self, name: &'static str) -> Result<DMatrix<f64>, ArtifactError> {
        if self.data.len() != self.rows * self.cols {
            return Err(ArtifactError::Shape { name, expected: self.rows * self.cols, got: self.data.len() });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTube {
    pub v: StoredMatrix,
    pub v_inv: StoredMatrix,
    pub radius: Vec<f64>,
    pub theta: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTightening {
    pub state_offsets: Vec<f64>,
    pub input_offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub closed_loop_eigenvalues: Vec<f64>,
    pub requested_poles: Vec<f64>,
    pub tightened_temperature_limits_c: Vec<f64>,
    pub tube_temperature_half_widths_c: Vec<f64>,
    pub input_volume_ratio: f64,
    pub input_width_ratios: Vec<f64>,
    pub certificate_checks: usize,
    pub certificate_violations: usize,
    pub certificate_worst_excess: f64,
}

impl From<&SynthesisReport> for StoredReport {
    fn from(r: &SynthesisReport) -> Self {
        Self {
            closed_loop_eigenvalues: r.closed_loop_eigenvalues.clone(),
            requested_poles: r.requested_poles.clone(),
            tightened_temperature_limits_c: r.tightened_temperature_limits.clone(),
            tube_temperature_half_widths_c: r.temperature_margins.clone(),
            input_volume_ratio: r.input_volume_ratio,
            input_width_ratios: r.input_width_ratios.clone(),
            certificate_checks: r.certificate.checks,
            certificate_violations: r.certificate.violations,
            certificate_worst_excess: r.certificate.worst_excess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerArtifact {
    pub format_version: u32,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub gain: StoredMatrix,
    pub tube: StoredTube,
    pub tightened: StoredTightening,
    pub report: StoredReport,
}

impl ControllerArtifact {
    pub fn new(cfg: &ScenarioConfig, ctrl: &TubeController, report: &SynthesisReport) -> Self {
        let o = &ctrl.omega;
        Self {
            format_version: ARTIFACT_VERSION,
            scenario_name: cfg.name.clone(),
            scenario_hash: cfg.content_hash(),
            gain: StoredMatrix::from_matrix(&ctrl.gain.k),
            tube: StoredTube {
                v: StoredMatrix::from_matrix(&o.v),
                v_inv: StoredMatrix::from_matrix(&o.v_inv),
                radius: o.radius.iter().copied().collect(),
                theta: o.theta.iter().copied().collect(),
                eigenvalues: o.eigenvalues.clone(),
            },
            tightened: StoredTightening {
                state_offsets: ctrl.tightened.x.offsets().iter().copied().collect(),
                input_offsets: ctrl.tightened.u.offsets().iter().copied().collect(),
            },
            report: report.into(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("artifact serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ArtifactError> {
        let a: Self = toml::from_str(text).map_err(|e| ArtifactError::Parse(e.to_string()))?;
        if a.format_version != ARTIFACT_VERSION {
            return Err(ArtifactError::Version(a.format_version));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_toml_string())
            .map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Rebuild the controller for `cfg`. Fails if the scenario changed since
    /// synthesis, if the stored tube is no longer invariant, or if the
    /// recomputed tightening differs from the stored one.
    pub fn to_controller(&self, cfg: &ScenarioConfig) -> Result<TubeController, ArtifactError> {
        let current = cfg.content_hash();
        if current != self.scenario_hash {
            return Err(ArtifactError::HashMismatch { stored: self.scenario_hash.clone(), current });
        }
        let k = self.gain.to_matrix("gain")?;
        let omega = RpiSet {
            v: self.tube.v.to_matrix("tube.v")?,
            v_inv: self.tube.v_inv.to_matrix("tube.v_inv")?,
            radius: DVector::from_vec(self.tube.radius.clone()),
            theta: DVector::from_vec(self.tube.theta.clone()),
            eigenvalues: self.tube.eigenvalues.clone(),
        };
        let ctrl = TubeController::from_parts(cfg, k, omega)?;
        let excess = ctrl.invariance_excess();
        if excess > CERTIFICATE_TOL {
            return Err(ArtifactError::NotInvariant(excess));
        }
        let diff = offset_diff(ctrl.tightened.x.offsets().as_slice(), &self.tightened.state_offsets)
            .max(offset_diff(ctrl.tightened.u.offsets().as_slice(), &self.tightened.input_offsets));
        if diff > OFFSET_TOL {
            return Err(ArtifactError::OffsetMismatch(diff));
        }
        Ok(ctrl)
    }
}

fn offset_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

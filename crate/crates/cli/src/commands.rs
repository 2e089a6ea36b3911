use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use linetube::sim::{run_closed_loop, run_free, summarize, DisturbanceGen, SimTrace, SummaryReport};
use linetube::{ScenarioConfig, ScenarioError, SynthesisError, TubeController};
use log::info;
use thiserror::Error;

use crate::artifact::{ArtifactError, ControllerArtifact};
use crate::output::{format_report, render_svg, write_csv};

/// Boundary samples used for the certificate printed at synthesis time.
const CERTIFICATE_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("synthesis failed: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error("synthesis failed: invariance certificate found {0} violations")]
    Certificate(usize),
    #[error("simulation aborted: {0}")]
    Simulation(#[from] linetube::SimError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    /// 1 validation, 2 synthesis, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => 1,
            CliError::Artifact(ArtifactError::Synthesis(_)) => 2,
            CliError::Artifact(_) => 1,
            CliError::Synthesis(_) | CliError::Certificate(_) => 2,
            CliError::Simulation(_) | CliError::Output { .. } => 3,
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output { path: path.display().to_string(), message: e.to_string() }
}

pub fn cmd_validate(path: &Path) -> Result<String, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    Ok(format!(
        "valid: {}\nlines: {}\ncurtailment_sites: {}\nscenario_hash: {}\n",
        cfg.name,
        cfg.lines.len(),
        cfg.curtailment.len(),
        cfg.content_hash()
    ))
}

/// Synthesize, write the artifact to `out` and return the synthesis report.
pub fn cmd_synthesize(path: &Path, out: &Path) -> Result<String, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    let ctrl = TubeController::synthesize(&cfg)?;
    let report = ctrl.report(CERTIFICATE_SAMPLES, cfg.simulation.seed);
    if !report.certificate.passed() {
        return Err(CliError::Certificate(report.certificate.violations));
    }
    ControllerArtifact::new(&cfg, &ctrl, &report).save(out)?;
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", cfg.name);
    let _ = writeln!(s, "scenario_hash: {}", cfg.content_hash());
    let _ = writeln!(s, "requested_poles: {}", join(&report.requested_poles));
    let _ = writeln!(s, "closed_loop_eigenvalues: {}", join(&report.closed_loop_eigenvalues));
    let _ = writeln!(s, "tube_radius: {}", join(&report.radius));
    for (line, (lim, hw)) in cfg.lines.iter().zip(report.tightened_temperature_limits.iter().zip(&report.temperature_margins)) {
        let _ = writeln!(s, "tightened_temperature_limit_c[{}]: {lim:.6}", line.name);
        let _ = writeln!(s, "tube_temperature_half_width_c[{}]: {hw:.6}", line.name);
    }
    let _ = writeln!(s, "input_width_ratios: {}", join(&report.input_width_ratios));
    let _ = writeln!(s, "input_volume_ratio: {:.6e}", report.input_volume_ratio);
    let _ = writeln!(s, "state_set_empty: {}", linetube::robust::is_empty(&ctrl.tightened.x));
    let _ = writeln!(s, "input_set_empty: {}", linetube::robust::is_empty(&ctrl.tightened.u));
    let _ = writeln!(s, "certificate_checks: {}", report.certificate.checks);
    let _ = writeln!(s, "certificate_violations: {}", report.certificate.violations);
    let _ = writeln!(s, "certificate_worst_excess: {:.3e}", report.certificate.worst_excess);
    let _ = writeln!(s, "artifact: {}", out.display());
    Ok(s)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Controller artifact; synthesized on the fly when absent.
    pub controller: Option<PathBuf>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    /// Run this many consecutive seeds starting at `seed`.
    pub seed_sweep: Option<usize>,
    pub free: bool,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub runs: Vec<(u64, SummaryReport)>,
    pub report: String,
}

/// `out.csv` becomes `out_seed7.csv` during a sweep.
fn per_seed_path(path: &Path, seed: u64, sweep: bool) -> PathBuf {
    if !sweep {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

fn run_one(cfg: &ScenarioConfig, ctrl: Option<&TubeController>, steps: usize, seed: u64) -> Result<SimTrace, CliError> {
    let mut gen = DisturbanceGen::from_scenario(cfg, seed);
    Ok(match ctrl {
        Some(c) => run_closed_loop(cfg, c, steps, &mut gen)?,
        None => run_free(cfg, steps, &mut gen)?,
    })
}

pub fn cmd_simulate(path: &Path, opts: &SimulateOptions) -> Result<SimulateOutcome, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    let ctrl = if opts.free {
        None
    } else {
        Some(match &opts.controller {
            Some(p) => ControllerArtifact::load(p)?.to_controller(&cfg)?,
            None => TubeController::synthesize(&cfg)?,
        })
    };
    let steps = opts.steps.unwrap_or(cfg.simulation.steps);
    let first = opts.seed.unwrap_or(cfg.simulation.seed);
    let count = opts.seed_sweep.unwrap_or(1).max(1);
    let sweep = opts.seed_sweep.is_some();
    let seeds: Vec<u64> = (0..count as u64).map(|i| first + i).collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(seeds.len());
    let chunk = seeds.len().div_ceil(workers);

    let results: Vec<Result<(u64, SimTrace), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let (cfg, ctrl) = (&cfg, ctrl.as_ref());
                scope.spawn(move || part.iter().map(|&s| run_one(cfg, ctrl, steps, s).map(|t| (s, t))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation worker panicked")).collect()
    });

    let mode = if opts.free { "free" } else { "robust" };
    let limits: Vec<f64> = cfg.lines.iter().map(|l| l.max_temperature_c).collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut text = String::new();
    for r in results {
        let (seed, trace) = r?;
        if let Some(p) = &opts.csv {
            let p = per_seed_path(p, seed, sweep);
            let f = File::create(&p).map_err(|e| output_err(&p, e))?;
            write_csv(BufWriter::new(f), &cfg, &trace).map_err(|e| output_err(&p, e))?;
        }
        if let Some(p) = &opts.svg {
            let p = per_seed_path(p, seed, sweep);
            std::fs::write(&p, render_svg(&cfg, &trace)).map_err(|e| output_err(&p, e))?;
        }
        let summary = summarize(&trace, &limits);
        info!("seed {seed}: max temperature margin {:.4} °C", summary.temperature_margin_c);
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&format_report(&cfg, mode, seed, &summary));
        runs.push((seed, summary));
    }
    if sweep {
        let with_violations = runs.iter().filter(|r| r.1.violations > 0).count();
        let infeasible: usize = runs.iter().map(|r| r.1.infeasible_steps).sum();
        let worst = runs.iter().map(|r| r.1.temperature_margin_c).fold(f64::INFINITY, f64::min);
        let _ = write!(
            text,
            "\nsweep_runs: {}\nsweep_runs_with_violations: {with_violations}\nsweep_infeasible_steps: {infeasible}\nsweep_min_temperature_margin_c: {worst:.6}\n",
            runs.len()
        );
    }
    if let Some(p) = &opts.report {
        std::fs::write(p, &text).map_err(|e| output_err(p, e))?;
    }
    Ok(SimulateOutcome { runs, report: text })
}

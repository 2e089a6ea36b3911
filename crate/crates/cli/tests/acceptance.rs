//! Acceptance checks, one per criterion. Runs without the libtest harness
//! so that every criterion prints a PASS/FAIL line on each run.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use linetube::mpc::qp::{kkt_residuals, solve, QpSettings, QpStatus};
use linetube::polytope::{minkowski_sum, pontryagin_diff_box, Box};
use linetube::robust::RobustError;
use linetube::scenario::ScenarioConfig;
use linetube::sim::{plant_step, run_closed_loop, run_free, summarize, DisturbanceGen, PlantState};
use linetube::thermal::{coefficients, equilibrium_temperature, heating_terms, step_nonlinear};
use linetube::{build_from_scenario, SynthesisError, TubeController};
use linetube_cli::{cmd_simulate, SimulateOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const THERMAL_REL_TOL: f64 = 1e-10;
const CONTRACTION_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-6;
const OBJECTIVE_REL_TOL: f64 = 1e-5;
const TEMPERATURE_LIMIT_C: f64 = 55.7;
const VOLUME_RATIO_LIMIT: f64 = 0.1;
const THERMAL_BUDGET: Duration = Duration::from_secs(1);
const CERTIFICATE_BUDGET: Duration = Duration::from_secs(5);
const QP_BUDGET: Duration = Duration::from_secs(30);
const SWEEP_BUDGET: Duration = Duration::from_secs(120);

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(scenario_path(name)).expect("bundled scenario loads")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn criterion_1() -> Outcome {
    let s = load("isle_jourdain.scenario");
    let mut bad = Vec::new();
    let mut eq = |what: &str, got: f64, want: f64| {
        if got != want {
            bad.push(format!("{what}: {got} != {want}"));
        }
    };
    let c = &s.conductors["aster288"];
    eq("m", c.mass_kg_per_m, 0.627);
    eq("c", c.heat_capacity_j_per_kg_k, 909.0);
    eq("D", c.diameter_m, 0.0196);
    eq("R", c.resistance_ohm_per_m, 1.15e-4);
    eq("lambda_f", c.air_conductivity_w_per_k_m, 2.61e-2);
    let ij_b = "Isle Jourdain - Bellac";
    let b_m = "Bellac - Maureix";
    eq("ptdf IJ-B/IJ", s.ptdf(ij_b, "Isle Jourdain").unwrap_or(f64::NAN), 0.36);
    eq("ptdf B-M/IJ", s.ptdf(b_m, "Isle Jourdain").unwrap_or(f64::NAN), 0.36);
    eq("ptdf IJ-B/Bellac", s.ptdf(ij_b, "Bellac").unwrap_or(f64::NAN), 0.38);
    eq("ptdf B-M/Bellac", s.ptdf(b_m, "Bellac").unwrap_or(f64::NAN), 0.62);
    for line in &s.lines {
        let w = &s.weather[&line.weather];
        eq("Nu", w.nusselt, 34.0);
        eq("T_a", w.ambient_c, 20.0);
        eq("I_T", w.radiation_w_per_m2, 10.0);
        eq("V", w.voltage_v, 9.0e4);
        eq("F0 average", line.average_flow_mw, 70.0);
        eq("F0 linearization", line.linearization_flow_mw, 78.0);
        eq("T_max", line.max_temperature_c, 55.7);
    }
    eq("battery power", s.battery.max_power_mw, 15.0);
    eq("battery energy", s.battery.energy_max_mwh, 30.0);
    eq("Bellac cap", s.curtailment.iter().find(|c| c.site == "Bellac").map_or(f64::NAN, |c| c.cap_mw), 30.0);
    eq("N", s.controller.horizon as f64, 10.0);
    eq("W flow", s.disturbance.flow_mw, 0.1);
    eq("W temperature", s.disturbance.temperature_c, 0.05);
    let poles = s.all_poles();
    for p in [0.7, 0.9, 0.45, 0.21] {
        if !poles.contains(&p) {
            bad.push(format!("pole {p} missing"));
        }
    }
    if s.lines.len() != 2 {
        bad.push(format!("{} lines", s.lines.len()));
    }
    outcome(bad.is_empty(), if bad.is_empty() { "all fields exact".into() } else { bad.join("; ") })
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let s = load("isle_jourdain.scenario");
    let p = (&s.conductors["aster288"]).into();
    let w = (&s.weather["nominal"]).into();
    let dt = s.controller.time_step_s;
    let coeffs = coefficients(&p, &w, dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..1000 {
        let t = rng.gen_range(-10.0..120.0);
        let f = rng.gen_range(0.0..150.0);
        let h = heating_terms(t, f, &p, &w);
        let reference = t + dt / (p.m * p.c) * (h.joule + h.solar - h.convective);
        let got = step_nonlinear(t, f, &coeffs, 0.0, 0.0);
        worst_rel = worst_rel.max((got - reference).abs() / reference.abs().max(1.0));
    }
    let mut worst_ratio: f64 = 0.0;
    for f in [0.0, 40.0, 70.0, 78.0, 120.0] {
        let teq = equilibrium_temperature(f, &coeffs);
        for start in [-30.0, 25.0] {
            let mut t = teq + start;
            for _ in 0..10 {
                let next = step_nonlinear(t, f, &coeffs, 0.0, 0.0);
                let ratio = (next - teq) / (t - teq);
                worst_ratio = worst_ratio.max((ratio - (1.0 - coeffs.beta)).abs());
                t = next;
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst_rel <= THERMAL_REL_TOL && worst_ratio <= CONTRACTION_TOL && elapsed < THERMAL_BUDGET,
        format!("max rel err {worst_rel:.2e}, max ratio dev {worst_ratio:.2e}, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = load("isle_jourdain.scenario");
    let ctrl = TubeController::synthesize(&cfg).unwrap();
    let started = Instant::now();
    let cert = ctrl.certify(10_000, 3);
    let elapsed = started.elapsed();
    outcome(
        cert.passed() && elapsed < CERTIFICATE_BUDGET,
        format!(
            "{} checks, {} violations, worst excess {:.2e}, {elapsed:.2?}",
            cert.checks, cert.violations, cert.worst_excess
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut empties = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=4);
        let mut random_box = |scale: f64| {
            let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..scale)).collect();
            (lo, hi)
        };
        let a = random_box(5.0);
        let b = random_box(2.5);
        let ab = Box::from_slices(&a.0, &a.1).unwrap();
        let bb = Box::from_slices(&b.0, &b.1).unwrap();
        let sum = minkowski_sum(&ab, &bb).unwrap();
        let (lo, hi) = oracles::minkowski_by_vertices((&a.0, &a.1), (&b.0, &b.1));
        if sum.lower().as_slice() != &lo[..] || sum.upper().as_slice() != &hi[..] {
            mismatches += 1;
        }
        let diff = pontryagin_diff_box(&ab, &bb).unwrap();
        match oracles::pontryagin_by_vertices((&a.0, &a.1), (&b.0, &b.1)) {
            None => {
                empties += 1;
                if !diff.is_empty() {
                    mismatches += 1;
                }
            }
            Some((lo, hi)) => {
                if diff.is_empty() || diff.lower().as_slice() != &lo[..] || diff.upper().as_slice() != &hi[..] {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("500 instances, {mismatches} mismatches ({empties} empty differences)"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut solver_time = Duration::ZERO;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut not_optimal = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=40);
        let mi = rng.gen_range(0..=(3 * n).min(120));
        let me = rng.gen_range(0..=n / 4);
        let qp = oracles::random_feasible_qp(&mut rng, n, mi, me);
        let started = Instant::now();
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        solver_time += started.elapsed();
        if sol.status != QpStatus::Optimal {
            not_optimal += 1;
            continue;
        }
        worst_kkt = worst_kkt.max(kkt_residuals(&qp, &sol).max());
        let reference = oracles::dual_projected_gradient(&qp, 1e-10, 1_000_000);
        let rel = (sol.objective - reference.primal_objective).abs() / sol.objective.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
    }
    outcome(
        not_optimal == 0 && worst_kkt <= KKT_TOL && worst_rel <= OBJECTIVE_REL_TOL && solver_time < QP_BUDGET,
        format!("max KKT {worst_kkt:.2e}, max objective rel diff {worst_rel:.2e}, {not_optimal} not optimal, solver {solver_time:.2?}"),
    )
}

struct SweepStats {
    free_min_peak: f64,
    controlled_max: f64,
    min_margin: f64,
    tube_exits: usize,
    infeasible: usize,
    elapsed: Duration,
}

fn sweep() -> SweepStats {
    let cfg = load("isle_jourdain_heatwave.scenario");
    let limits: Vec<f64> = cfg.lines.iter().map(|l| l.max_temperature_c).collect();
    let started = Instant::now();
    let ctrl = TubeController::synthesize(&cfg).unwrap();
    let mut stats = SweepStats {
        free_min_peak: f64::INFINITY,
        controlled_max: f64::NEG_INFINITY,
        min_margin: f64::INFINITY,
        tube_exits: 0,
        infeasible: 0,
        elapsed: Duration::ZERO,
    };
    for seed in 0..100 {
        let trace = run_closed_loop(&cfg, &ctrl, cfg.simulation.steps, &mut DisturbanceGen::from_scenario(&cfg, seed)).unwrap();
        let r = summarize(&trace, &limits);
        stats.controlled_max = stats.controlled_max.max(r.max_temperature_c.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        stats.min_margin = stats.min_margin.min(r.temperature_margin_c);
        stats.tube_exits += r.tube_exits;
        stats.infeasible += r.infeasible_steps;
    }
    stats.elapsed = started.elapsed();
    for seed in 0..100 {
        let trace = run_free(&cfg, cfg.simulation.steps, &mut DisturbanceGen::from_scenario(&cfg, seed)).unwrap();
        let r = summarize(&trace, &limits);
        stats.free_min_peak = stats.free_min_peak.min(r.max_temperature_c.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    stats
}

fn criterion_6(s: &SweepStats) -> Outcome {
    outcome(
        s.free_min_peak > TEMPERATURE_LIMIT_C && s.controlled_max <= TEMPERATURE_LIMIT_C && s.min_margin >= 0.0 && s.elapsed < SWEEP_BUDGET,
        format!(
            "free peak >= {:.4} °C in every run, controlled peak {:.4} °C, min margin {:.4} °C, sweep {:.2?}",
            s.free_min_peak, s.controlled_max, s.min_margin, s.elapsed
        ),
    )
}

fn criterion_7(s: &SweepStats) -> Outcome {
    outcome(
        s.tube_exits == 0 && s.infeasible == 0,
        format!("{} tube exits, {} infeasible steps over 100 x 60 steps", s.tube_exits, s.infeasible),
    )
}

fn criterion_8() -> Outcome {
    let cfg = load("isle_jourdain.scenario");
    let (_, sys) = build_from_scenario(&cfg).unwrap();
    let l = sys.layout;
    let p_bar = cfg.battery.max_power_mw;
    let frac = cfg.disturbance.flow_deviation_fraction;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = DVector::zeros(2 * l.n_l);
    let drift = vec![0.0; l.n_l];
    let mut exceptions = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..10_000 {
        let state = PlantState {
            flows: sys.lp.iter().map(|p| p.f0 + rng.gen_range(-frac..=frac) * p.f0).collect(),
            temperatures: sys.lp.iter().map(|p| p.t0 + rng.gen_range(-10.0..10.0)).collect(),
            battery_power: 0.0,
            battery_energy: 15.0,
            curtail_register: vec![0.0; l.n_g],
            curtail_level: vec![0.0; l.n_g],
        };
        let mut u = DVector::zeros(l.m());
        u[l.battery_input()] = rng.gen_range(-p_bar..=p_bar);
        let nonlinear = plant_step(&state, &u, &w, &drift, &sys).to_deviation(&sys);
        let linear = sys.predict(&state.to_deviation(&sys), &u);
        for i in 0..l.n_l {
            let t = l.temperature().start + i;
            let gap = (nonlinear[t] - linear[t]).abs();
            worst_ratio = worst_ratio.max(gap / sys.linearization_bound[i]);
            if gap > sys.linearization_bound[i] {
                exceptions += 1;
            }
        }
    }
    outcome(exceptions == 0, format!("{exceptions} exceptions, worst gap / bound {worst_ratio:.4}"))
}

fn criterion_9() -> Outcome {
    let mut cfg = load("isle_jourdain.scenario");
    cfg.disturbance.flow_mw = 1.0;
    match TubeController::synthesize(&cfg) {
        Err(SynthesisError::Robust(RobustError::EmptyTightenedSet(which))) => {
            outcome(true, format!("synthesis fails: empty {which}"))
        }
        Err(e) => outcome(false, format!("unexpected error: {e}")),
        Ok(ctrl) => {
            let ratio = ctrl.report(0, 0).input_volume_ratio;
            outcome(ratio < VOLUME_RATIO_LIMIT, format!("tightened input volume ratio {ratio:.3e}"))
        }
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(name);
        let opts = SimulateOptions { seed: Some(42), csv: Some(csv.clone()), ..Default::default() };
        cmd_simulate(&scenario_path("isle_jourdain_heatwave.scenario"), &opts).unwrap();
        std::fs::read(csv).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    outcome(a == b && !a.is_empty(), format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let sweep = sweep();
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(&sweep),
        criterion_7(&sweep),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("criterion {}: {} ({})", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

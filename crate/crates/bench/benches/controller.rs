use criterion::{black_box, criterion_group, criterion_main, Criterion};
use linetube::scenario::isle_jourdain_heatwave;
use linetube::sim::{run_closed_loop, DisturbanceGen, PlantState};
use linetube::TubeController;

fn synthesis(c: &mut Criterion) {
    let cfg = isle_jourdain_heatwave();
    c.bench_function("synthesize", |b| b.iter(|| TubeController::synthesize(black_box(&cfg)).unwrap()));
}

fn qp_solve(c: &mut Criterion) {
    let cfg = isle_jourdain_heatwave();
    let ctrl = TubeController::synthesize(&cfg).unwrap();
    let x = PlantState::initial(&cfg, &ctrl.sys).to_deviation(&ctrl.sys);
    c.bench_function("nominal_qp_initial_state", |b| b.iter(|| ctrl.solve(black_box(&x)).unwrap()));
}

fn closed_loop(c: &mut Criterion) {
    let cfg = isle_jourdain_heatwave();
    let ctrl = TubeController::synthesize(&cfg).unwrap();
    let mut group = c.benchmark_group("closed_loop");
    group.sample_size(20);
    group.bench_function("60_steps", |b| {
        b.iter(|| run_closed_loop(&cfg, &ctrl, 60, &mut DisturbanceGen::from_scenario(&cfg, 1)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, synthesis, qp_solve, closed_loop);
criterion_main!(benches);

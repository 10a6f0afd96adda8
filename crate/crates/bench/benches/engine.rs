use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use cutbench_core::circuit::{ghz_circuit, qft_circuit, random_circuit};
use cutbench_core::cutfind::{auto_select, default_presets, fitv3_select};
use cutbench_core::observables::z_magnetization;
use cutbench_core::qpd::generate_subexperiments_for;
use cutbench_core::simulator::{run_shots, simulate_exact, NoiseProfile};
use cutbench_core::{CutBudget, CutLocation, CutPlan, ReconstructionMode, ScoreWeights};

fn simulation(c: &mut Criterion) {
    let qft = qft_circuit(14).unwrap();
    c.bench_function("exact qft14", |b| b.iter(|| simulate_exact(black_box(&qft)).unwrap()));

    let mut noisy = random_circuit(10, 10, 1).unwrap();
    noisy.measure_all();
    c.bench_function("noisy random10 x2000 shots", |b| {
        b.iter(|| run_shots(black_box(&noisy), &NoiseProfile::BENCHMARK_DEFAULT, 2000, 7).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let budget = CutBudget::default();
    let ghz = ghz_circuit(12).unwrap();
    let rnd = random_circuit(8, 8, 3).unwrap();
    c.bench_function("fitv3 ghz12", |b| b.iter(|| fitv3_select(black_box(&ghz), &budget, &ScoreWeights::default())));
    c.bench_function("fitv3 random8", |b| b.iter(|| fitv3_select(black_box(&rnd), &budget, &ScoreWeights::default())));
    let presets = default_presets();
    c.bench_function("auto random8", |b| b.iter(|| auto_select(black_box(&rnd), &budget, &presets)));
}

fn reconstruction(c: &mut Criterion) {
    let ghz = ghz_circuit(8).unwrap();
    let plan = CutPlan::new(&ghz, vec![CutLocation::GateCut(3), CutLocation::GateCut(6)]).unwrap();
    let obs = vec![z_magnetization(8)];
    c.bench_function("generate ghz8 two cuts", |b| {
        b.iter(|| generate_subexperiments_for(&ghz, &plan, &obs, 4, ReconstructionMode::Exact).unwrap())
    });
    let set = generate_subexperiments_for(&ghz, &plan, &obs, 4, ReconstructionMode::Exact).unwrap();
    let outcomes = set.exact_outcomes().unwrap();
    c.bench_function("reconstruct ghz8 two cuts", |b| b.iter(|| set.reconstruct(black_box(&outcomes)).unwrap()));
}

criterion_group!(benches, simulation, selection, reconstruction);
criterion_main!(benches);

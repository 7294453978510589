use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use frontstab_core::green::{ContourSpec, GreenSolver, ProbeSet, Deriv};
use frontstab_core::model::ReactionSystem;
use frontstab_core::numerics::Grid1D;
use frontstab_core::profile::{solve_profile, ProfileOptions};
use frontstab_core::spectral::{assemble_linearization, check_spectral_assumption, SpectralOptions, StencilOrder};
use frontstab_core::Execution;

fn contour(c: &mut Criterion) {
    let sys = ReactionSystem::bistable();
    let g = Grid1D::symmetric(20.0, 801).unwrap();
    let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
    let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
    let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
    let mut probes = ProbeSet::default();
    for x in [-2.0, 0.0, 2.0] {
        for y in [-1.0, 1.0] {
            probes.add(g.nearest(x), g.nearest(y), Deriv::Value);
        }
    }
    let ts = [1.0, 3.0];

    let mut group = c.benchmark_group("contour");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let spec = ContourSpec::new(sd.eta, 1.0).unwrap();
        let solver = GreenSolver::new(&sys, &p, Some(&sd), spec, exec).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &solver, |b, s| {
            b.iter(|| s.evaluate(black_box(&probes), black_box(&ts)).unwrap())
        });
    }
    group.finish();
}

fn kernel_map(c: &mut Criterion) {
    let xs: Vec<f64> = (0..20_000).map(|i| i as f64 * 1e-3).collect();
    let work = |x: &f64| (0..50).fold(*x, |a, k| (a * 1.0001 + k as f64).sin());
    let mut group = c.benchmark_group("map");
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| exec.map(black_box(&xs), work)));
    }
    group.finish();
}

criterion_group!(benches, contour, kernel_map);
criterion_main!(benches);

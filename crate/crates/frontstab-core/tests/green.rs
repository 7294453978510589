use frontstab_core::green::*;
use frontstab_core::model::ReactionSystem;
use frontstab_core::numerics::Grid1D;
use frontstab_core::profile::{solve_profile, FrontProfile, ProfileOptions};
use frontstab_core::spectral::*;
use frontstab_core::Execution;

fn bistable() -> (ReactionSystem, FrontProfile, SpectralData) {
    let sys = ReactionSystem::bistable();
    let g = Grid1D::symmetric(30.0, 3001).unwrap();
    let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
    let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
    let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
    (sys, p, sd)
}

#[test]
fn explicit_lower_half_is_conjugate_and_splits_are_exact() {
    let (sys, p, sd) = bistable();
    let spec = ContourSpec::new(sd.eta, 0.5).unwrap();
    let solver = GreenSolver::new(&sys, &p, Some(&sd), spec, Execution::default()).unwrap();
    let g = &p.grid;
    let xs: Vec<usize> = [-3.0, 0.0, 2.0].iter().map(|&x| g.nearest(x)).collect();
    let ys: Vec<usize> = [-1.0, 0.0, 1.5].iter().map(|&y| g.nearest(y)).collect();
    let ts = [0.5, 1.0, 1.5, 30.0, 50.0];
    let (fields, stats) = sample_fields(&solver, &xs, &ts, &ys, &[Deriv::Value, Deriv::Y]).unwrap();
    assert!(stats.imag_max < 1e-8, "{stats:?}");
    for f in &fields {
        for k in 0..f.len() {
            assert!((f.g[k] - f.e[k] - f.g_tilde[k]).abs() < 1e-15);
            assert!((f.g[k] - f.f[k] - f.h_tilde[k]).abs() < 1e-15);
            let (_, t, _) = f.coords(k);
            if t <= 1.0 {
                assert_eq!(f.e[k], 0.0);
                assert_eq!(f.f[k], 0.0);
            }
        }
    }
    let v = &fields[0];
    // t = 50: ẽ → ψ̃, so F → E (1 − D = ½erfc((t ± z)/√4t) needs |z| small)
    let it50 = 4;
    for a in 0..3 {
        for b in 0..3 {
            if (v.x_values[a] - v.y_values[b]).abs() > 1.0 {
                continue;
            }
            let k = v.index(a, it50, b);
            assert!((v.f[k] - v.e[k]).abs() < 1e-6 * v.e[k].abs(), "{} {}", v.f[k], v.e[k]);
        }
    }
    // at the front centre, G̃ is negligible against E once e^{−ηt} has acted
    let (a0, b0) = (1, 1);
    let k = v.index(a0, 3, b0);
    assert!(v.g_tilde[k].abs() <= 1e-3 * v.e[k].abs(), "{} {}", v.g_tilde[k], v.e[k]);
}

#[test]
fn approximate_identity_at_short_time() {
    let (sys, p, sd) = bistable();
    let spec = ContourSpec::new(sd.eta, 0.05).unwrap();
    let mut spec = spec;
    spec.conjugate = ConjugateMode::Mirror;
    let solver = GreenSolver::new(&sys, &p, Some(&sd), spec, Execution::default()).unwrap();
    let g = &p.grid;
    let phi = |x: f64| (-x * x / 8.0).exp();
    let ys: Vec<usize> = (-300..=300).map(|k| g.nearest(0.02 * k as f64)).collect();
    let xs: Vec<usize> = [-2.0, -1.0, 0.0, 0.5, 1.5].iter().map(|&x| g.nearest(x)).collect();
    let mut probes = ProbeSet::default();
    for &x in &xs {
        for &y in &ys {
            probes.add(x, y, Deriv::Value);
        }
    }
    let r = solver.evaluate(&probes, &[0.05]).unwrap();
    for &x in &xs {
        let s: f64 = ys.iter().map(|&y| r.at(x, y, Deriv::Value, 0) * phi(g.node(y)) * g.h()).sum();
        let want = phi(g.node(x));
        assert!((s - want).abs() < 0.02 * want, "x={} {s} vs {want}", g.node(x));
    }
}

#[test]
fn sequential_and_parallel_contours_agree_bitwise() {
    let sys = ReactionSystem::linear(1.0);
    let g = Grid1D::symmetric(10.0, 201).unwrap();
    let p = FrontProfile::uniform(g, vec![0.0]);
    let spec = ContourSpec::new(1.0, 0.5).unwrap();
    let mut probes = ProbeSet::default();
    probes.add(100, 100, Deriv::Value);
    probes.add(120, 90, Deriv::Y);
    let a = GreenSolver::new(&sys, &p, None, spec.clone(), Execution::Sequential).unwrap().evaluate(&probes, &[0.5, 2.0]).unwrap();
    let b = GreenSolver::new(&sys, &p, None, spec, Execution::Parallel).unwrap().evaluate(&probes, &[0.5, 2.0]).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn fit_rejects_empty_and_lp_zero_input() {
    let o = FitOptions::new(0.08);
    assert!(fit_pointwise_bound(&[], TemplateId::TildeG, "q", &o).is_err());
}

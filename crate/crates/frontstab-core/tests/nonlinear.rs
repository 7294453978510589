use std::sync::OnceLock;

use frontstab_core::model::ReactionSystem;
use frontstab_core::nonlinear::*;
use frontstab_core::numerics::Grid1D;
use frontstab_core::profile::{solve_profile, FrontProfile, ProfileOptions};
use frontstab_core::spectral::*;
use proptest::prelude::*;

struct Setup {
    sys: ReactionSystem,
    p: FrontProfile,
    sd: SpectralData,
}

fn setup_on(half: f64, n: usize) -> Setup {
    let sys = ReactionSystem::bistable();
    let g = Grid1D::symmetric(half, n).unwrap();
    let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
    let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
    let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
    Setup { sys, p, sd }
}

fn bistable() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup_on(30.0, 3001))
}

fn coarse() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup_on(30.0, 1201))
}

fn short(t_end: f64) -> NonlinearOptions {
    NonlinearOptions { t_end, box_t_end: t_end / 2.0, box_half_width: t_end / 2.0, ..Default::default() }
}

fn run(s: &Setup, pert: Perturbation, o: &NonlinearOptions, field: bool) -> NonlinearRun {
    run_experiment(&s.sys, &s.p, &s.sd, s.sd.eta0, &pert, o, field).unwrap()
}

#[test]
fn translated_front_recovers_its_shift() {
    let s = bistable();
    let r = run(s, Perturbation::Translate { delta: 0.05 }, &short(20.0), false);
    let t = translation_oracle(&r, 0.05);
    assert!(t.pass, "{t:?}");
    assert!(t.relative_error < 1e-6, "{t:?}");
    assert!((t.alpha_fit_final - 0.05).abs() < 1e-6, "{t:?}");
    let g = gauge_consistency(&r, 2.0, 0.05, 1e-4);
    assert!(g.pass, "{g:?}");
}

#[test]
fn derivative_data_is_a_pure_phase() {
    let s = bistable();
    let eps = 0.01;
    let r = run(s, Perturbation::Derivative { epsilon: eps }, &short(20.0), false);
    // ū + εū′ ≈ ū(· + ε): the front settles at −ε
    let a = r.phase.alpha_inf();
    assert!((a + eps).abs() < 0.05 * eps, "{a}");
}

#[test]
fn zero_data_gives_zero_phase_and_residual() {
    let s = bistable();
    let zeros = vec![0.0; s.p.grid.n];
    let r = run(s, Perturbation::Custom { values: zeros }, &short(6.0), true);
    // ū is a discrete steady state only up to the profile tolerance
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    assert!(amax(&r.phase.alpha) < 1e-9, "{:e}", amax(&r.phase.alpha));
    assert!(amax(&r.phase.alpha_dot) < 1e-9);
    assert!(r.phase.zeta.last().unwrap() < &1e-8, "{:?}", r.phase.zeta.last());
    let f = r.field.as_ref().unwrap();
    for snap in &f.snapshots {
        assert!(amax(&snap.alpha.a) < 1e-9, "t = {}: {:e}", snap.t, amax(&snap.alpha.a));
        assert!(amax(&snap.v) < 1e-8, "t = {}: {:e}", snap.t, amax(&snap.v));
    }
}

#[test]
fn sech_run_decays_orbitally_and_scales_linearly() {
    let s = bistable();
    let o = NonlinearOptions::default();
    let full = run(s, Perturbation::Sech { amplitude: 0.01 }, &o, true);
    let half = run(s, Perturbation::Sech { amplitude: 0.005 }, &o, true);
    let eta0 = s.sd.eta0;

    // the phase is blind to the data until the cutoff switches on
    for (&t, &a) in full.phase.times.iter().zip(&full.phase.alpha) {
        if t <= 1.0 {
            assert_eq!(a, 0.0, "t = {t}");
        }
    }

    let d = verify_orbital_decay(&full, eta0, s.sd.eta);
    assert!(d.pass, "{d:?}");
    assert!(d.rate_l2.rate.unwrap() >= eta0 && d.rate_linf.rate.unwrap() >= eta0, "{d:?}");
    assert!(d.alpha_dot_mismatch < 1e-2);
    assert!(d.max_iterations <= 3);

    let sc = zeta_scaling(&full, &half, 0.15);
    assert!(sc.pass, "{sc:?}");
    assert!((sc.ratio - 2.0).abs() < 0.05, "{sc:?}");

    let q = quadratic_stability(full.field.as_ref().unwrap(), half.field.as_ref().unwrap(), o.noise_floor, 0.1);
    assert!(q.pass, "{q:?}");
    assert!(q.full.c_q > 0.0 && q.full.c_s > 0.0);

    // field phase at the front centre converges to the scalar limit
    let f = full.field.as_ref().unwrap();
    let last = f.snapshots.last().unwrap();
    let mid = s.p.grid.nearest(0.0);
    assert!((last.alpha.a[mid] - d.alpha_inf).abs() < 1e-3 * d.alpha_inf.abs().max(1e-3));

    let g = gauge_consistency(&full, 5.0, 0.05, 1e-4);
    assert!(g.pass, "{g:?}");
}

#[test]
fn gaussian_envelopes_and_damping_are_stable_under_refinement() {
    let s = bistable();
    let eta0 = s.sd.eta0;
    let o = short(16.0);
    let pert = Perturbation::Gaussian { amplitude: 0.005, m: 8.0 };
    let a = run(s, pert.clone(), &o, true);
    let fine = NonlinearOptions { dt: o.dt / 2.0, phase_stride: 2 * o.phase_stride, ..o.clone() };
    let b = run(s, pert, &fine, true);

    let pw = verify_pointwise_gaussian(&a, 8.0, eta0).unwrap();
    for e in [&pw.v, &pw.alpha, &pw.alpha_x, &pw.alpha_t] {
        assert!(e.c.is_finite() && e.c > 0.0, "{e:?}");
    }
    let pwb = verify_pointwise_gaussian(&b, 8.0, eta0).unwrap();
    assert!((pw.v.c - pwb.v.c).abs() <= 0.1 * pw.v.c, "{} {}", pw.v.c, pwb.v.c);

    for k in [1, 2] {
        let da = damping_check(a.field.as_ref().unwrap(), k, eta0).unwrap();
        let db = damping_check(b.field.as_ref().unwrap(), k, eta0).unwrap();
        assert!(da.finite && db.finite);
        assert!(damping_stability(&da, &db) < 0.1, "K = {k}: {} vs {}", da.constant, db.constant);
    }
    assert!(damping_check(a.field.as_ref().unwrap(), 3, eta0).is_err());
}

#[test]
fn options_are_validated() {
    let s = coarse();
    let bad = NonlinearOptions { box_t_end: 30.0, ..Default::default() };
    assert!(run_experiment(&s.sys, &s.p, &s.sd, s.sd.eta0, &Perturbation::Sech { amplitude: 0.01 }, &bad, false).is_err());
    let bad = NonlinearOptions { dt: 0.0, ..Default::default() };
    assert!(bad.validate().is_err());
    let short = Perturbation::Custom { values: vec![0.0; 3] };
    assert!(short.initial_state(&s.p).is_err());
    let huge = Perturbation::Sech { amplitude: 50.0 };
    assert!(run_experiment(&s.sys, &s.p, &s.sd, s.sd.eta0, &huge, &short_opts(), false).is_err());
}

fn short_opts() -> NonlinearOptions {
    NonlinearOptions { t_end: 4.0, box_t_end: 2.0, box_half_width: 4.0, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn zeta_is_nondecreasing_and_odd_in_the_data(amp in 1e-4f64..0.02, shift in -2.0f64..2.0) {
        let s = coarse();
        let xs = s.p.grid.nodes();
        let u0: Vec<f64> = xs.iter().map(|x| amp / (x - shift).cosh()).collect();
        let o = short_opts();
        let r = run(s, Perturbation::Custom { values: u0.clone() }, &o, false);
        prop_assert!(r.phase.zeta.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(r.phase.alpha.iter().all(|a| a.is_finite()));
        // to leading order the phase is linear in the data
        let neg = run(s, Perturbation::Custom { values: u0.iter().map(|v| -v).collect() }, &o, false);
        let (a, b) = (r.phase.alpha_inf(), neg.phase.alpha_inf());
        prop_assert!((a + b).abs() <= 0.1 * a.abs().max(1e-12) + 1e-12, "{} {}", a, b);
    }
}

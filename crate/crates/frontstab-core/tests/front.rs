use frontstab_core::model::ReactionSystem;
use frontstab_core::numerics::Grid1D;
use frontstab_core::profile::*;
use frontstab_core::resolvent::*;
use frontstab_core::spectral::*;
use num_complex::Complex64 as C;

#[test]
fn profile_spectrum_and_resolvent_fit_together() {
    let sys = ReactionSystem::bistable();
    let g = Grid1D::symmetric(30.0, 3001).unwrap();
    let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
    let err = g.nodes().iter().zip(&p.u_bar).map(|(&x, u)| (u - bistable_exact(x)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err:e}");
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((p.tail_rate_minus - r).abs() < 0.02 * r && (p.tail_rate_plus - r).abs() < 0.02 * r);

    let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
    let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
    assert!(sd.zero_eig.norm() < 1e-6);
    assert!(sd.zero_mode_cosine > 0.999);
    assert!(sd.eta > 0.3 && sd.eta0 < sd.eta / 4.0);
    // ⟨ψ̃, ū′⟩ = 1
    let pair: f64 = sd.psi_tilde.iter().zip(&p.u_bar_prime).map(|(a, b)| a * b).sum::<f64>() * g.h();
    assert!((pair - 1.0).abs() < 1e-8, "{pair}");

    // the resolvent kernel is real and symmetric for real λ (self-adjoint L)
    let (m, a) = resolvent_at(&sys, &p, C::new(-0.2, 0.0), ModeOptions::default()).unwrap();
    let (i, j) = (g.nearest(-1.5), g.nearest(2.5));
    let (k1, k2) = (a.kernel(&m, i, j), a.kernel(&m, j, i));
    assert!(k1.im.abs() < 1e-10 && (k1 - k2).norm() < 1e-8 * k1.norm());
}

#[test]
fn unbalanced_bistable_has_no_stationary_front() {
    let sys = ReactionSystem::bistable_with(0.3);
    let g = Grid1D::symmetric(30.0, 1501).unwrap();
    assert!(solve_profile(&sys, g, ProfileOptions::default()).is_err());
}

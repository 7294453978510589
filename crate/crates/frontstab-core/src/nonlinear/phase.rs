//! Scalar phase α(t): the causal integral scheme and an independent
//! least-squares fit.

use serde::{Deserialize, Serialize};

use super::{l1_linf, shift_state, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::green::{cutoff_chi, cutoff_chi_dt, cutoff_chi_dtt};
use crate::model::ReactionSystem;
use crate::numerics::{derivative, discrete_lp_norm, hermite, inner};
use crate::profile::{shifted_samples, FrontProfile};
use crate::spectral::SpectralData;

/// Fixed-point tolerance on α per step.
pub const PHASE_TOL: f64 = 1e-10;
const MAX_ITER: usize = 20;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseSeries {
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    /// From the e_t kernel.
    pub alpha_dot: Vec<f64>,
    /// Central differences of `alpha` (oracle; NaN at the ends).
    pub alpha_dot_fd: Vec<f64>,
    pub iterations: Vec<usize>,
    /// ‖u(·,t)‖_p, p = 1, 2, ∞, for u = ũ(x + α) − ū.
    pub u_norms: Vec<[f64; 3]>,
    /// ‖ũ(·,t) − ū(· − α(t))‖_p, p = 2, ∞.
    pub orbital: Vec<[f64; 2]>,
    /// ‖ũ(·,t) − ū‖_p, p = 1, 2, ∞ (no re-centring).
    pub raw: Vec<[f64; 3]>,
    /// ⟨ψ̃, N(u, ū)⟩.
    pub n_projection: Vec<f64>,
    /// Running sup of (|u|_{L¹∩L∞} + |α̇|)e^{η₀t}.
    pub zeta: Vec<f64>,
    /// |u0|_{L¹∩L∞}.
    pub e0: f64,
}

impl PhaseSeries {
    pub fn alpha_inf(&self) -> f64 {
        *self.alpha.last().unwrap_or(&0.0)
    }

    /// Largest |α̇_fd − α̇| relative to max(|α̇|, 10⁻³ sup|α̇|) for t ≥ `from`
    /// (the cutoff window [1, 2] is where the kernel switches on).
    pub fn alpha_dot_mismatch(&self, from: f64) -> f64 {
        let sup = self.alpha_dot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (k, &t) in self.times.iter().enumerate() {
            let fd = self.alpha_dot_fd[k];
            if t < from || !fd.is_finite() {
                continue;
            }
            let a = self.alpha_dot[k];
            worst = worst.max((fd - a).abs() / a.abs().max(1e-3 * sup));
        }
        worst
    }
}

/// N(u, ū) = f(u + ū) − f(ū) − f′(ū)u.
pub fn n_term(sys: &ReactionSystem, u_bar: &[f64], u: &[f64]) -> Vec<f64> {
    u_bar.iter().zip(u).map(|(&b, &v)| sys.f1(b + v) - sys.f1(b) - sys.df1(b) * v).collect()
}

/// α(t) = −χ(t)⟨ψ̃,u0⟩ − ∫₀ᵗ χ(t−s)[⟨ψ̃,N(u)⟩ − α̇⟨ψ̃′,u⟩](s) ds with u
/// re-extracted by shifting ũ by α, marched causally on the trajectory's
/// time grid (trapezoid in s). α̇ uses χ′ in place of χ.
pub fn extract_phase_integral(
    traj: &Trajectory,
    sys: &ReactionSystem,
    profile: &FrontProfile,
    spectral: &SpectralData,
    eta0: f64,
) -> Result<PhaseSeries> {
    let g = &traj.grid;
    let h = g.h();
    let ds = traj.ds;
    let psi = &spectral.psi_tilde;
    let psi_y = derivative(psi, h);
    let ub = &profile.u_bar;
    let nt = traj.times.len();
    if nt == 0 || psi.len() != g.n || ub.len() != g.n {
        return Err(invalid("trajectory, profile and spectral data must share the grid"));
    }
    let u0: Vec<f64> = traj.states[0].iter().zip(ub).map(|(a, b)| a - b).collect();
    let c0 = inner(psi, &u0, h);
    let e0 = l1_linf(g, &u0)?;

    let mut out = PhaseSeries {
        times: traj.times.clone(),
        alpha: Vec::with_capacity(nt),
        alpha_dot: Vec::with_capacity(nt),
        alpha_dot_fd: vec![f64::NAN; nt],
        iterations: Vec::with_capacity(nt),
        u_norms: Vec::with_capacity(nt),
        orbital: Vec::with_capacity(nt),
        raw: Vec::with_capacity(nt),
        n_projection: Vec::with_capacity(nt),
        zeta: Vec::with_capacity(nt),
        e0,
    };
    // integrand history g(s) = ⟨ψ̃,N⟩ − α̇⟨ψ̃′,u⟩
    let mut hist: Vec<f64> = Vec::with_capacity(nt);
    let mut zeta = 0.0f64;
    for j in 0..nt {
        let t = traj.times[j];
        // Trapezoid plus the Euler–Maclaurin end correction at s = 0. The
        // kernels are C² and flat at τ = 0, so this is the whole O(ds²) term.
        let history = |kernel: fn(f64) -> f64, dkernel: fn(f64) -> f64, hist: &[f64], gj: f64| -> f64 {
            let mut acc = 0.0;
            for (i, &gi) in hist.iter().enumerate() {
                let w = if i == 0 { 0.5 * ds } else { ds };
                acc += w * kernel(t - traj.times[i]) * gi;
            }
            // s = t endpoint
            if j > 0 {
                acc += 0.5 * ds * kernel(0.0) * gj;
            }
            if hist.len() >= 3 {
                let g0 = (-3.0 * hist[0] + 4.0 * hist[1] - hist[2]) / (2.0 * ds);
                let f0 = -dkernel(t) * hist[0] + kernel(t) * g0;
                acc += ds * ds / 12.0 * f0;
            }
            acc
        };
        // Fixed point in α_j: the s = t term carries χ(0) = 0, so this settles
        // after one pass; the loop guards the general case.
        let mut a = out.alpha.last().copied().unwrap_or(0.0);
        let mut iters = 0;
        let (mut u, mut gj, mut nproj);
        loop {
            iters += 1;
            u = perturbation(g, &traj.states[j], ub, a);
            let nn = n_term(sys, ub, &u);
            nproj = inner(psi, &nn, h);
            let ad = -cutoff_chi_dt(t) * c0 - history(cutoff_chi_dt, cutoff_chi_dtt, &hist, 0.0);
            gj = nproj - ad * inner(&psi_y, &u, h);
            let next = -cutoff_chi(t) * c0 - history(cutoff_chi, cutoff_chi_dt, &hist, gj);
            let change = (next - a).abs();
            a = next;
            if change < PHASE_TOL {
                break;
            }
            if iters >= MAX_ITER {
                return Err(Error::Instability(format!("phase fixed point did not converge at t = {t}")));
            }
        }
        if iters > 1 {
            u = perturbation(g, &traj.states[j], ub, a);
        }
        let ad = -cutoff_chi_dt(t) * c0 - history(cutoff_chi_dt, cutoff_chi_dtt, &hist, gj);
        hist.push(gj);
        out.alpha.push(a);
        out.alpha_dot.push(ad);
        out.iterations.push(iters);
        out.n_projection.push(nproj);
        let norms = [
            discrete_lp_norm(&u, g, 1.0)?,
            discrete_lp_norm(&u, g, 2.0)?,
            discrete_lp_norm(&u, g, f64::INFINITY)?,
        ];
        out.u_norms.push(norms);
        let back = shifted_samples(profile, 0, a);
        let orb: Vec<f64> = traj.states[j].iter().zip(&back).map(|(p, q)| p - q).collect();
        out.orbital.push([discrete_lp_norm(&orb, g, 2.0)?, discrete_lp_norm(&orb, g, f64::INFINITY)?]);
        let raw: Vec<f64> = traj.states[j].iter().zip(ub).map(|(p, q)| p - q).collect();
        out.raw.push([
            discrete_lp_norm(&raw, g, 1.0)?,
            discrete_lp_norm(&raw, g, 2.0)?,
            discrete_lp_norm(&raw, g, f64::INFINITY)?,
        ]);
        zeta = zeta.max((norms[0].max(norms[2]) + ad.abs()) * (eta0 * t).exp());
        out.zeta.push(zeta);
    }
    for j in 1..nt.saturating_sub(1) {
        out.alpha_dot_fd[j] = (out.alpha[j + 1] - out.alpha[j - 1]) / (2.0 * ds);
    }
    Ok(out)
}

/// u = ũ(x + a) − ū(x).
pub fn perturbation(grid: &crate::numerics::Grid1D, state: &[f64], u_bar: &[f64], a: f64) -> Vec<f64> {
    shift_state(grid, state, |_| a).iter().zip(u_bar).map(|(p, q)| p - q).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub t: f64,
    pub alpha: f64,
    pub objective: f64,
    /// False if the sampled objective has more than one local minimum.
    pub unique: bool,
}

/// argmin_a ‖ũ(· + a) − ū‖_{L²} over |a| ≤ a_max: coarse scan, golden
/// section on the bracketing cells, then one parabolic refinement.
pub fn fit_phase(profile: &FrontProfile, state: &[f64], a_max: f64) -> Result<(f64, f64, bool)> {
    let g = &profile.grid;
    if state.len() != g.n || !(a_max > 0.0) {
        return Err(invalid("bad state or search range"));
    }
    let inner_edge = g.x_max.min(-g.x_min) - a_max - 1.0;
    if inner_edge <= 0.0 {
        return Err(invalid("search range too large for the grid"));
    }
    let idx: Vec<usize> = (0..g.n).filter(|&i| g.node(i).abs() <= inner_edge).collect();
    let du = derivative(state, g.h());
    let j = |a: f64| -> f64 {
        idx.iter()
            .map(|&i| {
                let d = hermite(g, state, &du, g.node(i) + a).0 - profile.u_bar[i];
                d * d
            })
            .sum::<f64>()
            * g.h()
    };
    let n = 81;
    let grid_a: Vec<f64> = (0..n).map(|k| -a_max + 2.0 * a_max * k as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = grid_a.iter().map(|&a| j(a)).collect();
    let best = (0..n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let minima = (1..n - 1).filter(|&k| vals[k] < vals[k - 1] && vals[k] < vals[k + 1]).count();
    let (mut lo, mut hi) = (grid_a[best.saturating_sub(1)], grid_a[(best + 1).min(n - 1)]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fc, mut fd) = (j(c), j(d));
    while hi - lo > 1e-9 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = j(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = j(d);
        }
    }
    let mut a = 0.5 * (lo + hi);
    let dl = 1e-5;
    let (jm, j0, jp) = (j(a - dl), j(a), j(a + dl));
    let curv = jp - 2.0 * j0 + jm;
    if curv > 0.0 {
        let step = -0.5 * dl * (jp - jm) / curv;
        if step.abs() < dl {
            a += step;
        }
    }
    Ok((a, j(a), minima <= 1))
}

/// Phase fit of every trajectory snapshot.
pub fn extract_phase_fit(traj: &Trajectory, profile: &FrontProfile, a_max: f64) -> Result<Vec<PhaseFit>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let (alpha, objective, unique) = fit_phase(profile, u, a_max)?;
            Ok(PhaseFit { t, alpha, objective, unique })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid1D;
    use crate::profile::{solve_profile, ProfileOptions};

    fn front() -> FrontProfile {
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        solve_profile(&ReactionSystem::bistable(), g, ProfileOptions::default()).unwrap()
    }

    #[test]
    fn fit_recovers_constructed_shift() {
        let p = front();
        let u = shifted_samples(&p, 0, 0.3);
        let (a, _, unique) = fit_phase(&p, &u, 2.0).unwrap();
        assert!((a - 0.3).abs() < 1e-7, "{a}");
        assert!(unique);
        let (a0, j0, _) = fit_phase(&p, &p.u_bar, 2.0).unwrap();
        assert!(a0.abs() < 1e-7 && j0 < 1e-20, "{a0} {j0}");
    }

    #[test]
    fn n_term_is_quadratic() {
        let sys = ReactionSystem::bistable();
        let ub = [0.2, 0.05, 0.9]; // f″(½) = 0, so avoid the midpoint
        let small: Vec<f64> = n_term(&sys, &ub, &[1e-3; 3]);
        let half: Vec<f64> = n_term(&sys, &ub, &[5e-4; 3]);
        for (a, b) in small.iter().zip(&half) {
            assert!((a / b - 4.0).abs() < 1e-2, "{a} {b}");
        }
    }
}

//! x-dependent phase α̃(x,t) and the residual terms Q, R, S, T.
//!
//! ẽ(x,t;y) = χ(t)ψ̃(y)D(x−y,t) depends on x only through a convolution, and
//! D(·,τ) = 1_{[−τ,τ]} ∗ (heat kernel at τ) has the closed-form transform
//! D̂(k,τ) = 2 sin(kτ)/k · e^{−k²τ}. The history integral is therefore
//! accumulated in Fourier space, on the modes that survive e^{−k²τ} for
//! τ ≥ 1 (χ vanishes below), and x-derivatives are multipliers (ik)^m.
//!
//! After integrating by parts in y and s, the source enters as
//!   ∫ [ẽ (Q+T) − ẽ_y R + ẽ_yy S + ẽ_τ S] dy,
//! plus the boundary term ẽ(x,t;y)S(y,0).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{shift_state, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::green::{cutoff_chi, cutoff_chi_dt, cutoff_chi_dtt};
use crate::model::ReactionSystem;
use crate::numerics::{derivative, second_derivative, trapezoid, Grid1D};
use crate::profile::FrontProfile;
use crate::spectral::SpectralData;

/// Modes with e^{−k²τ} below e^{−DECAY_CUT} at τ = 1 are dropped.
const DECAY_CUT: f64 = 40.0;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResidualTerms {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// N(u, ū) of the scalar-phase scheme, evaluated at v.
    pub n_term: Vec<f64>,
    /// R_y and S_yy by finite differences.
    pub r_y: Vec<f64>,
    pub s_yy: Vec<f64>,
}

/// Sampled α̃ and the derivatives the residuals need.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AlphaFields {
    pub a: Vec<f64>,
    pub a_t: Vec<f64>,
    pub a_x: Vec<f64>,
    pub a_xx: Vec<f64>,
}

/// Q = f(v+ū) − f(ū) − f′(ū)v, R = vα̃_t + vα̃_xx + (ū_x+v_x)α̃_x²/(1+α̃_x),
/// S = −vα̃_x, T = (f(v+ū) − f(ū))α̃_x.
pub fn compute_residual_terms(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    v: &[f64],
    alpha: &AlphaFields,
) -> Result<ResidualTerms> {
    let n = profile.grid.n;
    let h = profile.grid.h();
    if v.len() != n || alpha.a_x.len() != n || alpha.a_t.len() != n || alpha.a_xx.len() != n {
        return Err(invalid("fields must be sampled on the profile grid"));
    }
    if let Some(i) = (0..n).find(|&i| (1.0 + alpha.a_x[i]).abs() < 0.5) {
        return Err(Error::DivisionDegenerate(format!("|1 + α̃_x| < 1/2 at x = {}", profile.grid.node(i))));
    }
    let ub = &profile.u_bar;
    let ubx = &profile.u_bar_prime;
    let vx = derivative(v, h);
    let mut out = ResidualTerms {
        q: vec![0.0; n],
        r: vec![0.0; n],
        s: vec![0.0; n],
        t: vec![0.0; n],
        n_term: vec![0.0; n],
        ..Default::default()
    };
    for i in 0..n {
        let (b, w) = (ub[i], v[i]);
        let (at, ax, axx) = (alpha.a_t[i], alpha.a_x[i], alpha.a_xx[i]);
        let df = sys.f1(b + w) - sys.f1(b);
        out.q[i] = df - sys.df1(b) * w;
        out.n_term[i] = out.q[i];
        out.r[i] = w * at + w * axx + (ubx[i] + vx[i]) * ax * ax / (1.0 + ax);
        out.s[i] = -w * ax;
        out.t[i] = df * ax;
    }
    out.r_y = derivative(&out.r, h);
    out.s_yy = second_derivative(&out.s, h);
    Ok(out)
}

/// T through Q: (Q + f′(ū)v)α̃_x. Agrees with the direct form to roundoff.
pub fn t_term_via_q(sys: &ReactionSystem, profile: &FrontProfile, v: &[f64], q: &[f64], a_x: &[f64]) -> Vec<f64> {
    (0..v.len()).map(|i| (q[i] + sys.df1(profile.u_bar[i]) * v[i]) * a_x[i]).collect()
}

// ---------------------------------------------------------------------------
// Fourier machinery

struct Fourier {
    n: usize,
    nfft: usize,
    h: f64,
    /// Retained wavenumbers, m = −M..=M.
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fourier {
    /// Padding keeps the periodic images of D(·, t_end) off the grid.
    fn new(grid: &Grid1D, t_end: f64) -> Self {
        let h = grid.h();
        let len = grid.x_max - grid.x_min;
        let reach = len + t_end + 12.0 * t_end.sqrt() + 10.0;
        let nfft = ((reach / h).ceil() as usize).max(grid.n * 2).next_power_of_two();
        let dk = 2.0 * std::f64::consts::PI / (nfft as f64 * h);
        let m = (DECAY_CUT.sqrt() / dk).ceil() as i64;
        let k = (-m..=m).map(|j| j as f64 * dk).collect();
        let mut planner = FftPlanner::new();
        Self { n: grid.n, nfft, h, k, fwd: planner.plan_fft_forward(nfft), inv: planner.plan_fft_inverse(nfft) }
    }

    fn slot(&self, i: usize) -> usize {
        let m = i as i64 - (self.k.len() / 2) as i64;
        if m >= 0 {
            m as usize
        } else {
            (self.nfft as i64 + m) as usize
        }
    }

    /// ĝ(k) = ∫ g(y) e^{−ik(y − x_min)} dy on the retained modes.
    fn forward(&self, g: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (b, &v) in buf.iter_mut().zip(g) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        (0..self.k.len()).map(|i| buf[self.slot(i)] * self.h).collect()
    }

    /// Grid samples of the inverse transform of (ik)^order · coef.
    fn inverse(&self, coef: &[Complex64], order: u32) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let i1 = Complex64::new(0.0, 1.0);
        for (i, (&c, &k)) in coef.iter().zip(&self.k).enumerate() {
            buf[self.slot(i)] = c * (i1 * k).powu(order);
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / (self.nfft as f64 * self.h);
        buf[..self.n].iter().map(|z| z.re * scale).collect()
    }
}

/// D̂, ∂_τD̂, ∂²_τD̂ at (k, τ).
pub fn window_transform(k: f64, tau: f64) -> (f64, f64, f64) {
    let g = (-k * k * tau).exp();
    let (s, c) = (k * tau).sin_cos();
    let d = if k == 0.0 { 2.0 * tau } else { 2.0 * s / k * g };
    let d_t = 2.0 * c * g - k * k * d;
    let d_tt = -2.0 * k * s * g - 2.0 * k * k * c * g - k * k * d_t;
    (d, d_t, d_tt)
}

/// Kernel coefficients at lag τ: χD̂, (χD̂)_τ, (χD̂)_ττ.
struct KernelRow {
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
}

fn kernel_row(k: &[f64], tau: f64) -> KernelRow {
    let (x0, x1, x2) = (cutoff_chi(tau), cutoff_chi_dt(tau), cutoff_chi_dtt(tau));
    let mut row = KernelRow { c1: vec![0.0; k.len()], c2: vec![0.0; k.len()], c3: vec![0.0; k.len()] };
    if x0 == 0.0 && x1 == 0.0 && x2 == 0.0 {
        return row;
    }
    for (i, &kk) in k.iter().enumerate() {
        let (d, dt, dtt) = window_transform(kk, tau);
        row.c1[i] = x0 * d;
        row.c2[i] = x1 * d + x0 * dt;
        row.c3[i] = x2 * d + 2.0 * x1 * dt + x0 * dtt;
    }
    row
}

// ---------------------------------------------------------------------------
// marching

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldOptions {
    /// Phase-step indices at which full fields are kept.
    pub record: Vec<usize>,
    /// Gaussian width for the ζ₂ weight e^{|x|²/(2M(1+t))}.
    pub m: f64,
    /// ζ₂ sup is taken over |x| ≤ this.
    pub weight_half_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub t: f64,
    pub alpha: AlphaFields,
    pub v: Vec<f64>,
    pub residuals: ResidualTerms,
    /// (S(t) − S(t − ds))/ds.
    pub s_t: Vec<f64>,
}

/// Per-step norms for the damping and ζ diagnostics.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StepNorms {
    pub t: f64,
    /// ‖v‖²_{H^K}, K = 0, 1, 2.
    pub v_hk: [f64; 3],
    /// ‖(α̃_t, α̃_x)‖²_{H^K}, K = 0, 1, 2.
    pub a_hk: [f64; 3],
    pub v_sup: f64,
    pub a_x_sup: f64,
    pub q_sup: f64,
    pub s_sup: f64,
    pub t_sup: f64,
    /// sup_{|x|≤w} (|v|+|v_x|+|v_xx|)e^{|x|²/(2M(1+t))}.
    pub v_weighted: f64,
    /// ‖α̃‖_{W^{3,∞}}.
    pub a_w3: f64,
    /// ‖(α̃_t, α̃_x)‖_{W^{3,∞}}.
    pub at_ax_w3: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseField {
    pub steps: Vec<StepNorms>,
    pub snapshots: Vec<FieldSnapshot>,
    /// ζ₁ with K = 2.
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub modes: usize,
    pub nfft: usize,
}

fn l2sq(f: &[f64], h: f64) -> f64 {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    trapezoid(&sq, h)
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// α̃(x, t_j) = −∫ẽ(x,t_j;y)v0 dy − ∫₀^{t_j}∫ẽ(x,t_j−s;y)(source)(y,s) dy ds,
/// with v re-extracted as ũ(x + α̃(x,t)) − ū(x) after every step. The kernel
/// vanishes for t − s ≤ 1, so each step only reads completed history.
pub fn extract_phase_field(
    traj: &Trajectory,
    sys: &ReactionSystem,
    profile: &FrontProfile,
    spectral: &SpectralData,
    eta0: f64,
    opts: &FieldOptions,
) -> Result<PhaseField> {
    let g = &traj.grid;
    let h = g.h();
    let ds = traj.ds;
    let nt = traj.times.len();
    let ub = &profile.u_bar;
    if nt == 0 || spectral.psi_tilde.len() != g.n || ub.len() != g.n {
        return Err(invalid("trajectory, profile and spectral data must share the grid"));
    }
    let t_end = traj.times[nt - 1];
    let fourier = Fourier::new(g, t_end);
    let nk = fourier.k.len();
    let rows: Vec<KernelRow> = (0..nt).map(|l| kernel_row(&fourier.k, l as f64 * ds)).collect();

    let psi = &spectral.psi_tilde;
    let psi_y = derivative(psi, h);
    let psi_yy = second_derivative(psi, h);
    let v0: Vec<f64> = traj.states[0].iter().zip(ub).map(|(a, b)| a - b).collect();
    let v0_hat = fourier.forward(&psi.iter().zip(&v0).map(|(a, b)| a * b).collect::<Vec<_>>());
    let i1 = Complex64::new(0.0, 1.0);

    let mut p_hist: Vec<Vec<Complex64>> = Vec::with_capacity(nt);
    let mut s_hist: Vec<Vec<Complex64>> = Vec::with_capacity(nt);
    let mut out = PhaseField {
        steps: Vec::with_capacity(nt),
        snapshots: vec![],
        zeta1: Vec::with_capacity(nt),
        zeta2: Vec::with_capacity(nt),
        modes: nk,
        nfft: fourier.nfft,
    };
    let mut prev_s: Option<Vec<f64>> = None;
    let (mut z1, mut z2) = (0.0f64, 0.0f64);
    let xs = g.nodes();
    for j in 0..nt {
        let t = traj.times[j];
        let mut ah = vec![Complex64::new(0.0, 0.0); nk];
        let mut ath = vec![Complex64::new(0.0, 0.0); nk];
        {
            let r = &rows[j];
            let s0 = s_hist.first();
            for m in 0..nk {
                let mut b = v0_hat[m];
                if let Some(s0) = s0 {
                    b -= s0[m];
                }
                ah[m] -= r.c1[m] * b;
                ath[m] -= r.c2[m] * b;
            }
        }
        for i in 0..j {
            let r = &rows[j - i];
            if r.c1.iter().all(|&c| c == 0.0) && r.c2.iter().all(|&c| c == 0.0) && r.c3.iter().all(|&c| c == 0.0) {
                continue;
            }
            let w = if i == 0 { 0.5 * ds } else { ds };
            let (p, s) = (&p_hist[i], &s_hist[i]);
            for m in 0..nk {
                ah[m] -= w * (r.c1[m] * p[m] + r.c2[m] * s[m]);
                ath[m] -= w * (r.c2[m] * p[m] + r.c3[m] * s[m]);
            }
        }
        let alpha = AlphaFields {
            a: fourier.inverse(&ah, 0),
            a_x: fourier.inverse(&ah, 1),
            a_xx: fourier.inverse(&ah, 2),
            a_t: fourier.inverse(&ath, 0),
        };
        let a_xxx = fourier.inverse(&ah, 3);
        let a_tx = fourier.inverse(&ath, 1);
        let a_txx = fourier.inverse(&ath, 2);
        let a_txxx = fourier.inverse(&ath, 3);
        if let Some(i) = (0..g.n).find(|&i| alpha.a_x[i].abs() >= 0.5) {
            return Err(Error::ShiftNonInvertible(format!("|α̃_x| ≥ 1/2 at x = {}, t = {t}", xs[i])));
        }
        let shifted = shift_state(g, &traj.states[j], |i| alpha.a[i]);
        let v: Vec<f64> = shifted.iter().zip(ub).map(|(a, b)| a - b).collect();
        let res = compute_residual_terms(sys, profile, &v, &alpha)?;

        // sources in Fourier space
        let a_src: Vec<f64> = (0..g.n).map(|i| res.q[i] + res.t[i]).collect();
        let p0: Vec<f64> = (0..g.n).map(|i| psi[i] * a_src[i] - psi_y[i] * res.r[i] + psi_yy[i] * res.s[i]).collect();
        let p1: Vec<f64> = (0..g.n).map(|i| psi[i] * res.r[i] - 2.0 * psi_y[i] * res.s[i]).collect();
        let p2: Vec<f64> = (0..g.n).map(|i| psi[i] * res.s[i]).collect();
        let (f0, f1, f2) = (fourier.forward(&p0), fourier.forward(&p1), fourier.forward(&p2));
        let pk: Vec<Complex64> =
            (0..nk).map(|m| f0[m] + i1 * fourier.k[m] * f1[m] - fourier.k[m] * fourier.k[m] * f2[m]).collect();
        p_hist.push(pk);
        s_hist.push(f2);

        // diagnostics
        let vx = derivative(&v, h);
        let vxx = second_derivative(&v, h);
        let v_hk0 = l2sq(&v, h);
        let v_hk1 = v_hk0 + l2sq(&vx, h);
        let v_hk2 = v_hk1 + l2sq(&vxx, h);
        let a0 = l2sq(&alpha.a_t, h) + l2sq(&alpha.a_x, h);
        let a1 = a0 + l2sq(&a_tx, h) + l2sq(&alpha.a_xx, h);
        let a2 = a1 + l2sq(&a_txx, h) + l2sq(&a_xxx, h);
        let weight_den = 2.0 * opts.m * (1.0 + t);
        let mut vw = 0.0f64;
        for i in 0..g.n {
            if xs[i].abs() <= opts.weight_half_width {
                vw = vw.max((v[i].abs() + vx[i].abs() + vxx[i].abs()) * (xs[i] * xs[i] / weight_den).exp());
            }
        }
        let a_w3 = sup(&alpha.a) + sup(&alpha.a_x) + sup(&alpha.a_xx) + sup(&a_xxx);
        let at_ax_w3 = sup(&alpha.a_t) + sup(&a_tx) + sup(&a_txx) + sup(&a_txxx) + sup(&alpha.a_x) + sup(&alpha.a_xx)
            + sup(&a_xxx);
        let st = StepNorms {
            t,
            v_hk: [v_hk0, v_hk1, v_hk2],
            a_hk: [a0, a1, a2],
            v_sup: sup(&v),
            a_x_sup: sup(&alpha.a_x),
            q_sup: sup(&res.q),
            s_sup: sup(&res.s),
            t_sup: sup(&res.t),
            v_weighted: vw,
            a_w3,
            at_ax_w3,
            iterations: 1,
        };
        z1 = z1.max(v_hk2.sqrt() * (eta0 * t).exp() + a2.sqrt() * (1.0 + t).powf(0.75));
        z2 = z2.max(vw * (1.0 + t).sqrt() * (0.5 * eta0 * t).exp() + a_w3 + at_ax_w3 * (1.0 + t).sqrt());
        out.zeta1.push(z1);
        out.zeta2.push(z2);
        out.steps.push(st);
        let s_t = match &prev_s {
            Some(ps) => res.s.iter().zip(ps).map(|(a, b)| (a - b) / ds).collect(),
            None => vec![0.0; g.n],
        };
        prev_s = Some(res.s.clone());
        if opts.record.contains(&j) {
            out.snapshots.push(FieldSnapshot { t, alpha, v, residuals: res, s_t });
        }
    }
    Ok(out)
}

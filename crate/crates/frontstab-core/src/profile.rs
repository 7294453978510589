//! Stationary front ū solving ū_xx + f(ū) = 0, ū(±∞) = u±.
//!
//! The boundary-value problem is discretised with the compact fourth-order
//! (Numerov) stencil
//!   (u_{i−1} − 2u_i + u_{i+1})/h² + (f_{i−1} + 10 f_i + f_{i+1})/12 = 0,
//! Dirichlet data u± at the truncation points, and the translation gauge fixed
//! by pinning the first component to its midpoint value at the anchor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::BandMatrix;
use crate::model::{end_state_spectrum, ReactionSystem};
use crate::numerics::{derivative, hermite, linear_fit, Grid1D};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Required sup-norm of the discrete residual.
    pub tol: f64,
    /// Position at which the first component crosses its midpoint value.
    pub anchor: f64,
    pub max_newton: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { tol: 1e-8, anchor: 0.0, max_newton: 60 }
    }
}

/// Sampled front. Multi-component states are stored node-major
/// (`u_bar[i*n + c]`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontProfile {
    pub grid: Grid1D,
    pub n: usize,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub anchor: f64,
    pub u_bar: Vec<f64>,
    pub u_bar_prime: Vec<f64>,
    pub tail_rate_minus: f64,
    pub tail_rate_plus: f64,
    pub residual_sup: f64,
}

impl FrontProfile {
    /// Assemble a profile from samples (derivative, tail rates and residual
    /// computed here). Used for synthetic inputs and for reloading artifacts.
    pub fn from_samples(sys: &ReactionSystem, grid: Grid1D, u_bar: Vec<f64>, anchor: f64) -> Result<Self> {
        let n = sys.n;
        if u_bar.len() != n * grid.n {
            return Err(invalid("sample count does not match grid"));
        }
        let mut p = FrontProfile {
            grid,
            n,
            u_minus: sys.u_minus.clone(),
            u_plus: sys.u_plus.clone(),
            anchor,
            u_bar,
            u_bar_prime: vec![],
            tail_rate_minus: f64::NAN,
            tail_rate_plus: f64::NAN,
            residual_sup: f64::NAN,
        };
        p.u_bar_prime = profile_derivative(&p);
        let (rm, rp) = tail_rates(&p)?;
        p.tail_rate_minus = rm;
        p.tail_rate_plus = rp;
        p.residual_sup = numerov_residual(sys, &p.grid, &p.u_bar).into_iter().fold(0.0, f64::max);
        Ok(p)
    }

    /// Spatially constant state (u′ ≡ 0); for constant-coefficient problems.
    pub fn uniform(grid: Grid1D, state: Vec<f64>) -> Self {
        let n = state.len();
        FrontProfile {
            grid,
            n,
            u_minus: state.clone(),
            u_plus: state.clone(),
            anchor: 0.0,
            u_bar: state.iter().cycle().take(n * grid.n).copied().collect(),
            u_bar_prime: vec![0.0; n * grid.n],
            tail_rate_minus: f64::INFINITY,
            tail_rate_plus: f64::INFINITY,
            residual_sup: 0.0,
        }
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.u_bar.iter().skip(c).step_by(self.n).copied().collect()
    }

    pub fn derivative_component(&self, c: usize) -> Vec<f64> {
        self.u_bar_prime.iter().skip(c).step_by(self.n).copied().collect()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.u_bar[i * self.n..(i + 1) * self.n]
    }

    /// ū(x) and ū′(x) by cubic Hermite interpolation (component `c`);
    /// constant extension outside the grid.
    pub fn eval(&self, c: usize, x: f64) -> (f64, f64) {
        if x <= self.grid.x_min {
            return (self.u_minus[c], 0.0);
        }
        if x >= self.grid.x_max {
            return (self.u_plus[c], 0.0);
        }
        let (i, s) = self.grid.locate(x);
        let n = self.n;
        crate::numerics::hermite_cell(
            self.u_bar[i * n + c],
            self.u_bar[(i + 1) * n + c],
            self.u_bar_prime[i * n + c],
            self.u_bar_prime[(i + 1) * n + c],
            self.grid.h(),
            s,
        )
    }
}

/// Pointwise Numerov residual at interior nodes (0 at the two ends).
pub fn numerov_residual(sys: &ReactionSystem, grid: &Grid1D, u: &[f64]) -> Vec<f64> {
    let n = sys.n;
    let big_n = grid.n;
    let h2 = grid.h() * grid.h();
    let mut f = vec![0.0; n * big_n];
    for i in 0..big_n {
        sys.f_into(&u[i * n..(i + 1) * n], &mut f[i * n..(i + 1) * n]);
    }
    let mut r = vec![0.0; big_n];
    for i in 1..big_n - 1 {
        let mut worst: f64 = 0.0;
        for c in 0..n {
            let k = |j: usize| j * n + c;
            let v = (u[k(i - 1)] - 2.0 * u[k(i)] + u[k(i + 1)]) / h2
                + (f[k(i - 1)] + 10.0 * f[k(i)] + f[k(i + 1)]) / 12.0;
            worst = worst.max(v.abs());
        }
        r[i] = worst;
    }
    r
}

/// Sup of the plain second-order residual δ²ū/h² + f(ū); O(h²) for a
/// converged profile.
pub fn stencil_residual(sys: &ReactionSystem, profile: &FrontProfile) -> f64 {
    let n = sys.n;
    let g = &profile.grid;
    let h2 = g.h() * g.h();
    let u = &profile.u_bar;
    let mut f = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for i in 1..g.n - 1 {
        sys.f_into(&u[i * n..(i + 1) * n], &mut f);
        for c in 0..n {
            let k = |j: usize| j * n + c;
            worst = worst.max(((u[k(i - 1)] - 2.0 * u[k(i)] + u[k(i + 1)]) / h2 + f[c]).abs());
        }
    }
    worst
}

/// Damped Newton on the Numerov BVP.
pub fn solve_profile(sys: &ReactionSystem, grid: Grid1D, opts: ProfileOptions) -> Result<FrontProfile> {
    let n = sys.n;
    let jump: f64 = sys.u_minus.iter().zip(&sys.u_plus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if jump < 1e-12 {
        return Err(Error::NoConnection("u- = u+: there is no front to connect".into()));
    }
    if (sys.u_minus[0] - sys.u_plus[0]).abs() < 1e-12 {
        return Err(invalid("first component must differ between end states (it carries the phase pin)"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("profile tolerance must be positive"));
    }
    let spec = end_state_spectrum(sys)?;
    let reach = (opts.anchor - grid.x_min).min(grid.x_max - opts.anchor);
    if (-spec.eta_prime * reach).exp() > opts.tol {
        return Err(invalid(format!(
            "domain too short: exp(-eta' * {reach:.3}) = {:e} exceeds tol",
            (-spec.eta_prime * reach).exp()
        )));
    }
    let big_n = grid.n;
    let h = grid.h();
    let h2 = h * h;
    let xs = grid.nodes();
    let width = 2.0 / spec.eta_prime;
    let mut u = vec![0.0; n * big_n];
    for (i, &x) in xs.iter().enumerate() {
        let s = 0.5 * (1.0 + ((x - opts.anchor) / width).tanh());
        for c in 0..n {
            u[i * n + c] = sys.u_minus[c] + (sys.u_plus[c] - sys.u_minus[c]) * s;
        }
    }
    for c in 0..n {
        u[c] = sys.u_minus[c];
        u[(big_n - 1) * n + c] = sys.u_plus[c];
    }

    // Pin: 4-point Lagrange interpolation of component 0 at the anchor.
    let (cell, frac) = grid.locate(opts.anchor);
    let base = cell.clamp(2, big_n - 4) - 1; // nodes base..base+3, all interior
    let tpos = (opts.anchor - xs[base]) / h;
    let lag: Vec<f64> = (0..4)
        .map(|j| {
            (0..4).filter(|&m| m != j).map(|m| (tpos - m as f64) / (j as f64 - m as f64)).product()
        })
        .collect();
    let pin_node = if frac < 0.5 { cell } else { cell + 1 }.clamp(1, big_n - 2);
    let mid = 0.5 * (sys.u_minus[0] + sys.u_plus[0]);

    let m = n * (big_n - 2);
    let bw = 3 * n;
    let idx = |i: usize, c: usize| (i - 1) * n + c; // interior unknown index

    let mut fbuf = vec![0.0; n * big_n];
    let mut jbuf = vec![0.0; n * n * big_n];
    let residual = |u: &[f64], fbuf: &mut [f64]| -> Vec<f64> {
        for i in 0..big_n {
            sys.f_into(&u[i * n..(i + 1) * n], &mut fbuf[i * n..(i + 1) * n]);
        }
        let mut r = vec![0.0; m];
        for i in 1..big_n - 1 {
            for c in 0..n {
                let k = |j: usize| j * n + c;
                r[idx(i, c)] = (u[k(i - 1)] - 2.0 * u[k(i)] + u[k(i + 1)]) / h2
                    + (fbuf[k(i - 1)] + 10.0 * fbuf[k(i)] + fbuf[k(i + 1)]) / 12.0;
            }
        }
        r[idx(pin_node, 0)] = (0..4).map(|j| lag[j] * u[(base + j) * n]).sum::<f64>() - mid;
        r
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut r = residual(&u, &mut fbuf);
    let mut converged = false;
    for _ in 0..opts.max_newton {
        let rn = sup(&r);
        if rn < 1e-3 * opts.tol.min(1e-9) {
            converged = true;
            break;
        }
        for i in 0..big_n {
            sys.df_into(&u[i * n..(i + 1) * n], &mut jbuf[i * n * n..(i + 1) * n * n]);
        }
        let mut jac = BandMatrix::<f64>::zeros(m, bw, bw);
        for i in 1..big_n - 1 {
            for c in 0..n {
                let row = idx(i, c);
                if i == pin_node && c == 0 {
                    for j in 0..4 {
                        jac.add_to(row, idx(base + j, 0), lag[j]);
                    }
                    continue;
                }
                for (nb, wlap, wf) in [(i - 1, 1.0, 1.0), (i, -2.0, 10.0), (i + 1, 1.0, 1.0)] {
                    if nb == 0 || nb == big_n - 1 {
                        continue;
                    }
                    jac.add_to(row, idx(nb, c), wlap / h2);
                    for k in 0..n {
                        jac.add_to(row, idx(nb, k), wf / 12.0 * jbuf[nb * n * n + c * n + k]);
                    }
                }
            }
        }
        let lu = jac.lu().map_err(|e| Error::NoConnection(format!("Newton Jacobian singular: {e}")))?;
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut step);
        let mut damp = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = u.clone();
            for i in 1..big_n - 1 {
                for c in 0..n {
                    trial[i * n + c] += damp * step[idx(i, c)];
                }
            }
            let rt = residual(&trial, &mut fbuf);
            let rtn = sup(&rt);
            if rtn.is_finite() && (rtn < rn || rtn < 1e-14) {
                u = trial;
                r = rt;
                accepted = true;
                break;
            }
            damp *= 0.5;
        }
        if !accepted {
            // Stagnation at roundoff level counts as convergence.
            if rn < opts.tol * 1e-2 {
                converged = true;
            }
            break;
        }
    }
    if !converged && sup(&r) >= opts.tol * 1e-2 {
        return Err(Error::NoConnection(format!("Newton did not converge (residual {:e})", sup(&r))));
    }
    // The pinned row replaced one equation; the full residual must also be small.
    let p = FrontProfile::from_samples(sys, grid, u, opts.anchor)?;
    if !(p.residual_sup < opts.tol) {
        return Err(Error::NoConnection(format!(
            "no stationary connection on this domain: residual {:e} at the pinned node",
            p.residual_sup
        )));
    }
    Ok(p)
}

/// Independent scalar solver: shoot along the unstable manifold of u−, place
/// the midpoint crossing at the anchor, patch exponential tails.
pub fn solve_profile_shooting(sys: &ReactionSystem, grid: Grid1D, anchor: f64) -> Result<FrontProfile> {
    if sys.n != 1 {
        return Err(invalid("shooting is implemented for scalar systems only"));
    }
    let (um, up) = (sys.u_minus[0], sys.u_plus[0]);
    if (um - up).abs() < 1e-12 {
        return Err(Error::NoConnection("u- = u+".into()));
    }
    let gm = (-sys.df1(um)).sqrt();
    let gp = (-sys.df1(up)).sqrt();
    let sgn = (up - um).signum();
    let delta = 1e-7;
    let hs = grid.h() / 8.0;
    let rhs = |y: [f64; 2]| [y[1], -sys.f1(y[0])];
    let rk4 = |y: [f64; 2]| {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * hs * k1[0], y[1] + 0.5 * hs * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * hs * k2[0], y[1] + 0.5 * hs * k2[1]]);
        let k4 = rhs([y[0] + hs * k3[0], y[1] + hs * k3[1]]);
        [
            y[0] + hs / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + hs / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    // Trajectory in local coordinate s (s=0 at the start point).
    let mid = 0.5 * (um + up);
    let mut traj = vec![[um + sgn * delta, sgn * gm * delta]];
    let mut crossing = None;
    let mut best = f64::INFINITY;
    for k in 0..10_000_000usize {
        let y = *traj.last().unwrap();
        let ny = rk4(y);
        if crossing.is_none() && (y[0] - mid) * (ny[0] - mid) <= 0.0 && y[0] != ny[0] {
            crossing = Some((k as f64 + (mid - y[0]) / (ny[0] - y[0])) * hs);
        }
        let dist = (ny[0] - up).abs();
        if !ny[0].is_finite() || (crossing.is_some() && dist > best) || dist < 1e-9 {
            break;
        }
        best = best.min(dist);
        traj.push(ny);
    }
    let sc = crossing.ok_or_else(|| Error::NoConnection("shooting never crossed the midpoint".into()))?;
    let s_end = (traj.len() - 1) as f64 * hs;
    let (u_end, _) = (traj.last().unwrap()[0], ());
    let sample = |x: f64| -> f64 {
        let s = x - anchor + sc;
        if s <= 0.0 {
            um + sgn * delta * (gm * s).exp()
        } else if s >= s_end {
            up + (u_end - up) * (-gp * (s - s_end)).exp()
        } else {
            let k = ((s / hs).floor() as usize).min(traj.len() - 2);
            let fr = s / hs - k as f64;
            crate::numerics::hermite_cell(traj[k][0], traj[k + 1][0], traj[k][1], traj[k + 1][1], hs, fr).0
        }
    };
    let mut u: Vec<f64> = grid.nodes().iter().map(|&x| sample(x)).collect();
    u[0] = um;
    *u.last_mut().unwrap() = up;
    FrontProfile::from_samples(sys, grid, u, anchor)
}

/// Decay rates of |ū − u±| from log-linear regression on each half-domain.
///
/// The window is [1/2, 7/8] of the half-domain measured outward from the
/// centre: the last eighth is excluded because Dirichlet truncation bends the
/// tail there. Samples below a roundoff floor are dropped; if fewer than eight
/// remain the window moves inward.
pub fn tail_rates(profile: &FrontProfile) -> Result<(f64, f64)> {
    let g = &profile.grid;
    let xs = g.nodes();
    let n = profile.n;
    let centre = 0.5 * (g.x_min + g.x_max);
    let half = 0.5 * (g.x_max - g.x_min);
    let dev = |i: usize, end: &[f64]| -> f64 {
        (0..n).map(|c| (profile.u_bar[i * n + c] - end[c]).powi(2)).sum::<f64>().sqrt()
    };
    let side = |sign: f64, end: &[f64]| -> Result<f64> {
        let idx: Vec<usize> = (0..g.n).filter(|&i| (xs[i] - centre) * sign > 0.0).collect();
        let peak = idx.iter().map(|&i| dev(i, end)).fold(0.0, f64::max);
        let floor = 1e-13 * peak.max(f64::MIN_POSITIVE);
        let (mut lo, mut hi) = (0.5, 0.875);
        for _ in 0..6 {
            let (mut px, mut py) = (vec![], vec![]);
            for &i in &idx {
                let r = (xs[i] - centre).abs() / half;
                let d = dev(i, end);
                if r >= lo && r <= hi && d > floor {
                    px.push((xs[i] - centre).abs());
                    py.push(d.ln());
                }
            }
            if px.len() >= 8 {
                let fit = linear_fit(&px, &py).ok_or_else(|| invalid("degenerate tail regression"))?;
                return Ok(-fit.slope);
            }
            lo *= 0.5;
            hi *= 0.5;
        }
        Err(Error::ResolutionInsufficient("tail magnitudes underflow on every regression window".into()))
    };
    let minus = side(-1.0, &profile.u_minus)?;
    let plus = side(1.0, &profile.u_plus)?;
    Ok((minus, plus))
}

/// sup_x |ū(x) − u±| e^{η|x−anchor|} on each half-line: the constant C in the
/// exponential localisation bound for a given rate η.
pub fn tail_bound_constants(profile: &FrontProfile, eta: f64) -> (f64, f64) {
    let xs = profile.grid.nodes();
    let n = profile.n;
    let (mut cm, mut cp) = (0.0f64, 0.0f64);
    for (i, &x) in xs.iter().enumerate() {
        let r = x - profile.anchor;
        let end = if r < 0.0 { &profile.u_minus } else { &profile.u_plus };
        let d = (0..n).map(|c| (profile.u_bar[i * n + c] - end[c]).powi(2)).sum::<f64>().sqrt();
        let v = d * (eta * r.abs()).exp();
        if r < 0.0 {
            cm = cm.max(v);
        } else {
            cp = cp.max(v);
        }
    }
    (cm, cp)
}

/// ū′ by fourth-order centred differences (second-order at the ends).
pub fn profile_derivative(profile: &FrontProfile) -> Vec<f64> {
    let n = profile.n;
    let h = profile.grid.h();
    let mut out = vec![0.0; profile.u_bar.len()];
    for c in 0..n {
        let d = derivative(&profile.component(c), h);
        for (i, v) in d.into_iter().enumerate() {
            out[i * n + c] = v;
        }
    }
    out
}

/// Closed-form bistable front 1/(1+e^{x/√2}) (a = 1/2, u− = 1, u+ = 0).
pub fn bistable_exact(x: f64) -> f64 {
    1.0 / (1.0 + (x / std::f64::consts::SQRT_2).exp())
}

pub fn bistable_exact_prime(x: f64) -> f64 {
    let e = (x / std::f64::consts::SQRT_2).exp();
    if !e.is_finite() {
        return 0.0;
    }
    -e / (std::f64::consts::SQRT_2 * (1.0 + e) * (1.0 + e))
}

/// Re-evaluate a profile at shifted coordinates, ū(x − δ), by Hermite
/// interpolation (ends clamped to u±).
pub fn shifted_samples(profile: &FrontProfile, c: usize, delta: f64) -> Vec<f64> {
    let f = profile.component(c);
    let fp = profile.derivative_component(c);
    profile.grid.nodes().iter().map(|&x| hermite(&profile.grid, &f, &fp, x - delta).0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_profile() -> FrontProfile {
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        solve_profile(&ReactionSystem::bistable(), g, ProfileOptions::default()).unwrap()
    }

    #[test]
    fn closed_form_is_a_solution() {
        // Oracle check before trusting the closed form: ū'' + f(ū) analytically.
        // With s = e^{x/√2}, ū = 1/(1+s), ū'' = s(s−1)/(2(1+s)³).
        for k in 0..200 {
            let x = -20.0 + 0.2 * k as f64;
            let s = (x / std::f64::consts::SQRT_2).exp();
            let u = bistable_exact(x);
            let upp = s * (s - 1.0) / (2.0 * (1.0 + s).powi(3));
            let f = u * (1.0 - u) * (u - 0.5);
            assert!((upp + f).abs() < 1e-15);
        }
    }

    #[test]
    fn bistable_profile_matches_closed_form() {
        let p = default_profile();
        let xs = p.grid.nodes();
        let err = xs.iter().zip(&p.u_bar).map(|(&x, &u)| (u - bistable_exact(x)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "L-inf error {err:e}");
        assert!(p.residual_sup < 1e-8);
        assert!((p.u_bar[1500] - 0.5).abs() < 1e-14);
        assert!(p.u_bar_prime.iter().all(|&d| d < 0.0 || d.abs() < 1e-12));
    }

    #[test]
    fn derivative_and_tails() {
        let p = default_profile();
        let expected = -1.0 / (4.0 * std::f64::consts::SQRT_2);
        assert!((p.u_bar_prime[1500] - expected).abs() < 1e-4);
        assert!(p.u_bar_prime[0].abs() < 1e-6 && p.u_bar_prime[3000].abs() < 1e-6);
        let g = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.tail_rate_plus / g - 1.0).abs() < 0.02, "{}", p.tail_rate_plus);
        assert!((p.tail_rate_minus / g - 1.0).abs() < 0.02, "{}", p.tail_rate_minus);
        let (cm, cp) = tail_bound_constants(&p, g);
        assert!(cm.is_finite() && cp.is_finite() && cm < 2.0 && cp < 2.0);
    }

    #[test]
    fn synthetic_tail_rates() {
        let sys = ReactionSystem::linear(1.0);
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| (-2.0 * x.abs()).exp()).collect();
        let p = FrontProfile::from_samples(&sys, g, u, 0.0).unwrap();
        let (m, pl) = tail_rates(&p).unwrap();
        assert!((m - 2.0).abs() < 0.02 && (pl - 2.0).abs() < 0.02, "{m} {pl}");
    }

    #[test]
    fn linear_system_has_no_front() {
        let g = Grid1D::symmetric(30.0, 301).unwrap();
        let r = solve_profile(&ReactionSystem::linear(1.0), g, ProfileOptions::default());
        assert!(matches!(r, Err(Error::NoConnection(_))));
    }

    #[test]
    fn unbalanced_bistable_has_no_stationary_front() {
        let g = Grid1D::symmetric(40.0, 801).unwrap();
        let r = solve_profile(&ReactionSystem::bistable_with(0.3), g, ProfileOptions::default());
        assert!(matches!(r, Err(Error::NoConnection(_))), "{r:?}");
    }

    #[test]
    fn stencil_residual_is_second_order() {
        let sys = ReactionSystem::bistable();
        let opts = ProfileOptions::default();
        let r1 = stencil_residual(&sys, &solve_profile(&sys, Grid1D::symmetric(30.0, 1501).unwrap(), opts).unwrap());
        let r2 = stencil_residual(&sys, &solve_profile(&sys, Grid1D::symmetric(30.0, 3001).unwrap(), opts).unwrap());
        let ratio = r1 / r2;
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn anchor_shift_translates_profile() {
        let sys = ReactionSystem::bistable();
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        let base = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
        let delta = 0.37;
        let moved = solve_profile(&sys, g, ProfileOptions { anchor: delta, ..Default::default() }).unwrap();
        let shifted = shifted_samples(&base, 0, delta);
        let err = shifted.iter().zip(&moved.u_bar).skip(100).take(2800).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn shooting_cross_check() {
        let sys = ReactionSystem::bistable();
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        let newton = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
        let shoot = solve_profile_shooting(&sys, g, 0.0).unwrap();
        let err = newton.u_bar.iter().zip(&shoot.u_bar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn domain_too_short_rejected() {
        let g = Grid1D::symmetric(5.0, 101).unwrap();
        assert!(solve_profile(&ReactionSystem::bistable(), g, ProfileOptions::default()).is_err());
    }
}

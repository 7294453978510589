//! Compact fourth-order IMEX stepping for u_t = u_xx + f(u) on a bounded
//! interval with fixed end values.
//!
//! Space: B u_xx ≈ D₂u with B = (1, 10, 1)/12 and D₂ = (1, −2, 1)/h², so the
//! discrete steady states are exactly the Numerov profiles. Time: SBDF2
//! (implicit diffusion, extrapolated reaction), started by one IMEX Euler step:
//!
//!   (3B/2 − dt D₂)uⁿ⁺¹ = B(2uⁿ − uⁿ⁻¹/2) + dt B(2fⁿ − fⁿ⁻¹).

use crate::error::{invalid, Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::numerics::Grid1D;

/// Largest dt·Lip(f) accepted for the explicit reaction.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug)]
pub struct Sbdf2 {
    pub grid: Grid1D,
    pub n: usize,
    pub dt: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    euler: BandLu<f64>,
    bdf2: BandLu<f64>,
}

fn operator(grid: &Grid1D, n: usize, a: f64, dt: f64) -> Result<BandLu<f64>> {
    let m = grid.n - 2;
    let h2 = grid.h() * grid.h();
    let mut mat = BandMatrix::<f64>::zeros(m * n, n, n);
    for i in 0..m {
        for c in 0..n {
            let r = i * n + c;
            mat.add_to(r, r, a * 10.0 / 12.0 + 2.0 * dt / h2);
            if i > 0 {
                mat.add_to(r, r - n, a / 12.0 - dt / h2);
            }
            if i + 1 < m {
                mat.add_to(r, r + n, a / 12.0 - dt / h2);
            }
        }
    }
    mat.lu()
}

impl Sbdf2 {
    /// `left`/`right` are the (time-independent) boundary states.
    pub fn new(grid: Grid1D, n: usize, dt: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || left.len() != n || right.len() != n {
            return Err(invalid("bad time step or boundary data"));
        }
        Ok(Self {
            euler: operator(&grid, n, 1.0, dt)?,
            bdf2: operator(&grid, n, 1.5, dt)?,
            grid,
            n,
            dt,
            left,
            right,
        })
    }

    /// Reject dt if dt·lip exceeds the explicit-reaction limit.
    pub fn check_stability(&self, lip: f64) -> Result<()> {
        if self.dt * lip > STABILITY_LIMIT {
            return Err(Error::Instability(format!(
                "dt·Lip(f) = {:.3} exceeds {STABILITY_LIMIT}",
                self.dt * lip
            )));
        }
        Ok(())
    }

    /// B v on the interior (node-major, interior unknowns only).
    fn apply_b(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = self.grid.n - 2;
        for i in 0..m {
            for c in 0..n {
                let k = (i + 1) * n + c;
                out[i * n + c] = (v[k - n] + 10.0 * v[k] + v[k + n]) / 12.0;
            }
        }
    }

    fn solve(&self, lu: &BandLu<f64>, a: f64, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = self.n;
        let m = self.grid.n - 2;
        let h2 = self.grid.h() * self.grid.h();
        let off = a / 12.0 - self.dt / h2;
        for c in 0..n {
            rhs[c] -= off * self.left[c];
            rhs[(m - 1) * n + c] -= off * self.right[c];
        }
        lu.solve_in_place(&mut rhs);
        let mut out = Vec::with_capacity(self.grid.n * n);
        out.extend_from_slice(&self.left);
        out.extend_from_slice(&rhs);
        out.extend_from_slice(&self.right);
        out
    }

    /// (B − dt D₂)u¹ = B u⁰ + dt B f⁰.
    pub fn euler_step(&self, u0: &[f64], f0: &[f64]) -> Vec<f64> {
        let comb: Vec<f64> = u0.iter().zip(f0).map(|(u, f)| u + self.dt * f).collect();
        let mut rhs = vec![0.0; (self.grid.n - 2) * self.n];
        self.apply_b(&comb, &mut rhs);
        self.solve(&self.euler, 1.0, rhs)
    }

    pub fn step(&self, u_n: &[f64], u_prev: &[f64], f_n: &[f64], f_prev: &[f64]) -> Vec<f64> {
        let dt = self.dt;
        let comb: Vec<f64> = (0..u_n.len())
            .map(|k| 2.0 * u_n[k] - 0.5 * u_prev[k] + dt * (2.0 * f_n[k] - f_prev[k]))
            .collect();
        let mut rhs = vec![0.0; (self.grid.n - 2) * self.n];
        self.apply_b(&comb, &mut rhs);
        self.solve(&self.bdf2, 1.5, rhs)
    }

    /// Integrate from u0 at t = 0, calling `observe(step_index, t, u)` after
    /// every step (and once at t = 0); `f` maps a full state to its reaction.
    pub fn run(
        &self,
        u0: Vec<f64>,
        steps: usize,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
        mut observe: impl FnMut(usize, f64, &[f64]) -> Result<()>,
    ) -> Result<Vec<f64>> {
        observe(0, 0.0, &u0)?;
        if steps == 0 {
            return Ok(u0);
        }
        let f0 = f(&u0);
        let mut u_prev = u0;
        let mut f_prev = f0;
        let mut u = self.euler_step(&u_prev, &f_prev);
        observe(1, self.dt, &u)?;
        for k in 2..=steps {
            let fu = f(&u);
            let next = self.step(&u, &u_prev, &fu, &f_prev);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::Instability(format!("non-finite state at step {k}")));
            }
            u_prev = std::mem::replace(&mut u, next);
            f_prev = fu;
            observe(k, k as f64 * self.dt, &u)?;
        }
        Ok(u)
    }
}

/// Step count for reaching `t` with step `dt`; errors unless t is a whole
/// number of steps (to 1e−9 relative).
pub fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(invalid(format!("t = {t} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

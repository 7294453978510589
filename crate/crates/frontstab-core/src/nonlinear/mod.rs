//! Nonlinear experiments: evolve u_t = u_xx + f(u) from perturbed fronts,
//! track the scalar phase α(t) and the x-dependent phase α̃(x,t), and test the
//! decay statements empirically.
//!
//! Convention throughout: u(x,t) = ũ(x + α(t), t) − ū(x), and likewise
//! v(x,t) = ũ(x + α̃(x,t), t) − ū(x). A solution that settles to ū(· − δ)
//! therefore has α∞ = δ.

mod field;
mod phase;
mod verify;

pub use field::*;
pub use phase::*;
pub use verify::*;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imex::{steps_for, Sbdf2};
use crate::model::ReactionSystem;
use crate::numerics::{derivative, discrete_lp_norm, hermite, Grid1D};
use crate::profile::{shifted_samples, FrontProfile};

/// Initial data ũ(·,0) = ū + u0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// u0 = amplitude · sech(x).
    Sech { amplitude: f64 },
    /// u0 = amplitude · e^{−x²/m}.
    Gaussian { amplitude: f64, m: f64 },
    /// ũ0 = ū(· − delta).
    Translate { delta: f64 },
    /// u0 = epsilon · ū′.
    Derivative { epsilon: f64 },
    /// Explicit samples of u0 on the profile grid.
    Custom { values: Vec<f64> },
}

impl Perturbation {
    pub fn initial_state(&self, profile: &FrontProfile) -> Result<Vec<f64>> {
        if profile.n != 1 {
            return Err(invalid("nonlinear experiments are implemented for scalar systems"));
        }
        let xs = profile.grid.nodes();
        let ub = &profile.u_bar;
        let add = |u0: Vec<f64>| ub.iter().zip(u0).map(|(a, b)| a + b).collect::<Vec<_>>();
        Ok(match self {
            Perturbation::Sech { amplitude } => add(xs.iter().map(|x| amplitude / x.cosh()).collect()),
            Perturbation::Gaussian { amplitude, m } => {
                if !(*m > 0.0) {
                    return Err(invalid("gaussian width m must be positive"));
                }
                add(xs.iter().map(|x| amplitude * (-x * x / m).exp()).collect())
            }
            Perturbation::Translate { delta } => shifted_samples(profile, 0, *delta),
            Perturbation::Derivative { epsilon } => add(profile.u_bar_prime.iter().map(|d| epsilon * d).collect()),
            Perturbation::Custom { values } => {
                if values.len() != ub.len() {
                    return Err(invalid(format!("custom perturbation has {} samples, grid has {}", values.len(), ub.len())));
                }
                add(values.clone())
            }
        })
    }

    /// The same family with its amplitude scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Perturbation::Sech { amplitude } => Perturbation::Sech { amplitude: amplitude * s },
            Perturbation::Gaussian { amplitude, m } => Perturbation::Gaussian { amplitude: amplitude * s, m: *m },
            Perturbation::Translate { delta } => Perturbation::Translate { delta: delta * s },
            Perturbation::Derivative { epsilon } => Perturbation::Derivative { epsilon: epsilon * s },
            Perturbation::Custom { values } => Perturbation::Custom { values: values.iter().map(|v| v * s).collect() },
        }
    }
}

/// Snapshot times: geometric on [from, to] then uniform steps up to T_end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotSchedule {
    pub geometric_from: f64,
    pub geometric_to: f64,
    pub geometric_count: usize,
    pub uniform_step: f64,
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        Self { geometric_from: 0.1, geometric_to: 2.0, geometric_count: 6, uniform_step: 0.5 }
    }
}

impl SnapshotSchedule {
    /// Phase-step indices (step = `ds`) of the snapshots, sorted, deduplicated,
    /// always including 0 and the last step.
    pub fn steps(&self, ds: f64, last: usize) -> Vec<usize> {
        let mut out = vec![0, last];
        let n = self.geometric_count.max(2);
        for k in 0..n {
            let t = self.geometric_from * (self.geometric_to / self.geometric_from).powf(k as f64 / (n - 1) as f64);
            out.push(((t / ds).round() as usize).min(last));
        }
        if self.uniform_step > 0.0 {
            let mut t = self.geometric_to;
            while t <= last as f64 * ds + 1e-9 {
                out.push(((t / ds).round() as usize).min(last));
                t += self.uniform_step;
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearOptions {
    pub t_end: f64,
    /// PDE time step.
    pub dt: f64,
    /// PDE steps per phase step (phase quadrature uses ds = stride·dt).
    pub phase_stride: usize,
    pub snapshots: SnapshotSchedule,
    /// Start of the exponential-tail regression window.
    pub fit_from: f64,
    /// Norms below this are treated as discretisation noise in rate fits.
    pub noise_floor: f64,
    /// Half-width of the (x) sample box for pointwise templates.
    pub box_half_width: f64,
    /// Final time of the base (t) sample box; the enlarged box doubles it.
    pub box_t_end: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            t_end: 40.0,
            dt: 0.01,
            phase_stride: 5,
            snapshots: SnapshotSchedule::default(),
            fit_from: 5.0,
            noise_floor: 1e-8,
            box_half_width: 10.0,
            box_t_end: 20.0,
        }
    }
}

impl NonlinearOptions {
    pub fn ds(&self) -> f64 {
        self.dt * self.phase_stride as f64
    }

    pub fn phase_steps(&self) -> Result<usize> {
        steps_for(self.t_end, self.ds())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.phase_stride > 0) {
            return Err(invalid("t_end, dt and phase_stride must be positive"));
        }
        if !(self.noise_floor > 0.0 && self.box_half_width > 0.0 && self.box_t_end > 0.0) {
            return Err(invalid("noise_floor and sample box must be positive"));
        }
        if 2.0 * self.box_t_end > self.t_end + 1e-9 {
            return Err(invalid("the enlarged sample box (2·box_t_end) must fit within t_end"));
        }
        self.phase_steps()?;
        Ok(())
    }
}

/// ũ(·, t_k) at t_k = k·ds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub dt: f64,
    pub ds: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Semi-implicit evolution of the full PDE with Dirichlet data taken from the
/// profile ends; a snapshot every `stride` steps up to `t_end`.
pub fn evolve_pde(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    initial: Vec<f64>,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if sys.n != 1 || profile.n != 1 {
        return Err(invalid("PDE evolution is implemented for scalar systems"));
    }
    let grid = profile.grid;
    if initial.len() != grid.n {
        return Err(invalid("initial state does not match grid"));
    }
    let (lo, hi) = (profile.u_minus[0].min(profile.u_plus[0]), profile.u_minus[0].max(profile.u_plus[0]));
    let margin = 0.5 * (hi - lo).max(1e-3);
    if initial.iter().any(|&u| !(u >= lo - margin && u <= hi + margin)) {
        return Err(invalid("initial state leaves the hull of the end states (± margin)"));
    }
    let hull = lo.abs().max(hi.abs()).max(1e-3);
    let lip = {
        let (a, b) = (lo - margin, hi + margin);
        (0..=200).map(|k| sys.df1(a + (b - a) * k as f64 / 200.0).abs()).fold(0.0, f64::max)
    };
    let st = Sbdf2::new(grid, 1, dt, vec![profile.u_bar[0]], vec![profile.u_bar[grid.n - 1]])?;
    st.check_stability(lip)?;
    let total = steps_for(t_end, dt)?;
    if stride == 0 || total % stride != 0 {
        return Err(invalid("t_end must be a whole number of snapshot strides"));
    }
    let mut times = Vec::with_capacity(total / stride + 1);
    let mut states = Vec::with_capacity(total / stride + 1);
    st.run(
        initial,
        total,
        |u| u.iter().map(|&v| sys.f1(v)).collect(),
        |k, t, u| {
            let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if sup > 10.0 * hull {
                return Err(Error::Instability(format!("blow-up: |u|∞ = {sup:.3e} at t = {t}")));
            }
            if k % stride == 0 {
                times.push(t);
                states.push(u.to_vec());
            }
            Ok(())
        },
    )?;
    Ok(Trajectory { grid, dt, ds: dt * stride as f64, times, states })
}

/// ũ(x + a(x)) on the grid by Hermite interpolation of ũ with differenced slopes.
pub fn shift_state(grid: &Grid1D, u: &[f64], a: impl Fn(usize) -> f64) -> Vec<f64> {
    let du = derivative(u, grid.h());
    (0..grid.n).map(|i| hermite(grid, u, &du, grid.node(i) + a(i)).0).collect()
}

/// |w|_{L¹∩L∞} = max(‖w‖₁, ‖w‖∞), which bounds every ‖w‖_p, 1 ≤ p ≤ ∞.
pub fn l1_linf(grid: &Grid1D, w: &[f64]) -> Result<f64> {
    Ok(discrete_lp_norm(w, grid, 1.0)?.max(discrete_lp_norm(w, grid, f64::INFINITY)?))
}

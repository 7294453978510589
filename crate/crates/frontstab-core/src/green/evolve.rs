//! Independent oracle: G(·,t;y) = e^{Lt}δ_y by time stepping from narrow
//! Gaussians, extrapolated to zero width.

use crate::error::{invalid, Result};
use crate::imex::{steps_for, Sbdf2};
use crate::model::ReactionSystem;
use crate::numerics::trapezoid;
use crate::profile::FrontProfile;

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Standard deviation of the narrower start; the second uses twice this.
    pub delta_width: f64,
    pub dt: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { delta_width: 0.08, dt: 1e-3 }
    }
}

/// Unit-mass (discrete trapezoid) Gaussian of standard deviation `w` at y.
pub fn unit_gaussian(profile: &FrontProfile, y: f64, w: f64) -> Vec<f64> {
    let g = &profile.grid;
    let mut v: Vec<f64> = g.nodes().iter().map(|&x| (-(x - y).powi(2) / (2.0 * w * w)).exp()).collect();
    let m = trapezoid(&v, g.h());
    v.iter_mut().for_each(|a| *a /= m);
    v
}

/// v(·, t) for v_t = v_xx + f′(ū)v, v(·,0) = v0, zero Dirichlet data, at
/// each requested t (which must be multiples of dt).
pub fn evolve_linear(sys: &ReactionSystem, profile: &FrontProfile, v0: Vec<f64>, ts: &[f64], dt: f64) -> Result<Vec<Vec<f64>>> {
    if sys.n != 1 {
        return Err(invalid("linear evolution is implemented for scalar systems"));
    }
    let dfu: Vec<f64> = profile.u_bar.iter().map(|&u| sys.df1(u)).collect();
    let lip = dfu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let st = Sbdf2::new(profile.grid, 1, dt, vec![0.0], vec![0.0])?;
    st.check_stability(lip)?;
    let wanted: Vec<usize> = ts.iter().map(|&t| steps_for(t, dt)).collect::<Result<_>>()?;
    let last = wanted.iter().copied().max().unwrap_or(0);
    let mut out = vec![vec![]; ts.len()];
    st.run(
        v0,
        last,
        |v| v.iter().zip(&dfu).map(|(a, b)| a * b).collect(),
        |k, _, v| {
            for (slot, &w) in out.iter_mut().zip(&wanted) {
                if w == k {
                    *slot = v.to_vec();
                }
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// G(·, t; y) on the full grid for each t: (4v_w − v_{2w})/3 removes the
/// O(w²) smoothing error of the Gaussian start.
pub fn green_evolve(sys: &ReactionSystem, profile: &FrontProfile, ts: &[f64], y: f64, opts: &EvolveOptions) -> Result<Vec<Vec<f64>>> {
    let h = profile.grid.h();
    if opts.delta_width < 2.0 * h {
        return Err(invalid(format!("delta width {} is below 2h = {}", opts.delta_width, 2.0 * h)));
    }
    let a = evolve_linear(sys, profile, unit_gaussian(profile, y, opts.delta_width), ts, opts.dt)?;
    let b = evolve_linear(sys, profile, unit_gaussian(profile, y, 2.0 * opts.delta_width), ts, opts.dt)?;
    Ok(a.iter().zip(&b).map(|(u, v)| u.iter().zip(v).map(|(p, q)| (4.0 * p - q) / 3.0).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{heat_kernel, Grid1D};

    #[test]
    fn unit_mass_start() {
        let g = Grid1D::symmetric(20.0, 2001).unwrap();
        let p = FrontProfile::uniform(g, vec![0.0]);
        let v = unit_gaussian(&p, 0.3, 0.08);
        assert!((trapezoid(&v, g.h()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn decaying_heat_kernel() {
        let g = Grid1D::symmetric(20.0, 2001).unwrap();
        let sys = ReactionSystem::linear(1.0);
        let p = FrontProfile::uniform(g, vec![0.0]);
        let out = green_evolve(&sys, &p, &[1.0], 0.0, &EvolveOptions::default()).unwrap();
        let exact = heat_kernel(0.0, 1.0) * (-1.0f64).exp();
        assert!((out[0][1000] - exact).abs() < 1e-5, "{} vs {exact}", out[0][1000]);
        assert!((exact - 0.10378).abs() < 1e-5);
    }
}

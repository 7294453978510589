//! Time Green function G(x,t;y) of the linearisation: contour reconstruction,
//! the two splittings G = E + G̃ and G = F + H̃, pointwise bound fits, and
//! kernel-level spot checks.

mod checks;
mod contour;
mod evolve;
mod fit;

pub use checks::*;
pub use contour::*;
pub use evolve::*;
pub use fit::*;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::SQRT_PI;

/// Smooth cutoff: 0 on [0,1], 1 on [2,∞), quintic smoothstep between.
pub fn cutoff_chi(t: f64) -> f64 {
    let s = (t - 1.0).clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub fn cutoff_chi_dt(t: f64) -> f64 {
    let s = t - 1.0;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

pub fn cutoff_chi_dtt(t: f64) -> f64 {
    let s = t - 1.0;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
}

/// D(z,t) = errfn((z+t)/√4t) − errfn((z−t)/√4t) and derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrfnWindow {
    pub d: f64,
    pub d_z: f64,
    pub d_zz: f64,
    pub d_zzz: f64,
    pub d_t: f64,
    pub d_tz: f64,
}

pub fn errfn_window(z: f64, t: f64) -> ErrfnWindow {
    if t <= 0.0 {
        return ErrfnWindow::default();
    }
    let r = (4.0 * t).sqrt();
    let (a, b) = ((z + t) / r, (z - t) / r);
    let (ga, gb) = ((-a * a).exp() / SQRT_PI, (-b * b).exp() / SQRT_PI);
    // g′(s) = −2s g, g″(s) = (4s² − 2) g
    let (ga1, gb1) = (-2.0 * a * ga, -2.0 * b * gb);
    let (ga2, gb2) = ((4.0 * a * a - 2.0) * ga, (4.0 * b * b - 2.0) * gb);
    let at = (t - z) / (2.0 * t * r);
    let bt = -(t + z) / (2.0 * t * r);
    let tz = -1.0 / (2.0 * t * r);
    ErrfnWindow {
        d: crate::numerics::errfn(a) - crate::numerics::errfn(b),
        d_z: (ga - gb) / r,
        d_zz: (ga1 - gb1) / (r * r),
        d_zzz: (ga2 - gb2) / (r * r * r),
        d_t: ga * at - gb * bt,
        d_tz: (ga1 * at - gb1 * bt) / r + (ga - gb) * tz,
    }
}

/// Samples on an (x, t, y) box, index ((ix·nt) + it)·ny + iy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenField {
    pub deriv: Deriv,
    pub t_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub x_index: Vec<usize>,
    pub y_index: Vec<usize>,
    pub g: Vec<f64>,
    pub e: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub f: Vec<f64>,
    pub h_tilde: Vec<f64>,
    /// e(y,t) = χ(t)ψ̃(y), index it·ny + iy.
    pub e_phase: Vec<f64>,
    /// ẽ(x,t;y), same layout as `g`.
    pub e_tilde: Vec<f64>,
    pub chi: Vec<f64>,
}

impl GreenField {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn index(&self, ix: usize, it: usize, iy: usize) -> usize {
        (ix * self.t_values.len() + it) * self.y_values.len() + iy
    }

    /// (x, t, y) of a flat index.
    pub fn coords(&self, k: usize) -> (f64, f64, f64) {
        let (nt, ny) = (self.t_values.len(), self.y_values.len());
        (self.x_values[k / (nt * ny)], self.t_values[(k / ny) % nt], self.y_values[k % ny])
    }
}

/// E (or its derivative) at grid nodes: ū′(x)χ(t)ψ̃(y).
pub fn first_split(pole: &Pole, ix: usize, t: f64, iy: usize, deriv: Deriv) -> f64 {
    cutoff_chi(t) * pole.term(ix, iy, deriv)
}

/// F (or its derivative) at grid nodes: ū′(x)χ(t)ψ̃(y)D(x − y, t).
pub fn second_split(pole: &Pole, x: f64, ix: usize, t: f64, y: f64, iy: usize, deriv: Deriv) -> f64 {
    let chi = cutoff_chi(t);
    if chi == 0.0 {
        return 0.0;
    }
    let w = errfn_window(x - y, t);
    chi * match deriv {
        Deriv::Value => pole.u1[ix] * pole.psi[iy] * w.d,
        Deriv::X => pole.psi[iy] * (pole.u2[ix] * w.d + pole.u1[ix] * w.d_z),
        Deriv::Y => pole.u1[ix] * (pole.psi_y[iy] * w.d - pole.psi[iy] * w.d_z),
    }
}

/// Fill E and G̃ from G.
pub fn decompose_first(field: &mut GreenField, pole: &Pole) {
    let (ny, nt) = (field.y_values.len(), field.t_values.len());
    for k in 0..field.len() {
        let (ix, it, iy) = (k / (nt * ny), (k / ny) % nt, k % ny);
        let e = first_split(pole, field.x_index[ix], field.t_values[it], field.y_index[iy], field.deriv);
        field.e[k] = e;
        field.g_tilde[k] = field.g[k] - e;
    }
    for it in 0..nt {
        for iy in 0..ny {
            field.e_phase[it * ny + iy] = field.chi[it] * pole.psi[field.y_index[iy]];
        }
    }
}

/// Fill F, ẽ and H̃ from G.
pub fn decompose_second(field: &mut GreenField, pole: &Pole) {
    let (ny, nt) = (field.y_values.len(), field.t_values.len());
    for k in 0..field.len() {
        let (ix, it, iy) = (k / (nt * ny), (k / ny) % nt, k % ny);
        let (x, t, y) = (field.x_values[ix], field.t_values[it], field.y_values[iy]);
        let (gx, gy) = (field.x_index[ix], field.y_index[iy]);
        let f = second_split(pole, x, gx, t, y, gy, field.deriv);
        field.f[k] = f;
        field.h_tilde[k] = field.g[k] - f;
        field.e_tilde[k] = cutoff_chi(t) * pole.psi[gy] * errfn_window(x - y, t).d;
    }
}

/// Reconstruct G on the node box `x_index × ts × y_index` for each requested
/// derivative, sharing one contour pass, and decompose both ways.
pub fn sample_fields(
    solver: &GreenSolver,
    x_index: &[usize],
    ts: &[f64],
    y_index: &[usize],
    derivs: &[Deriv],
) -> Result<(Vec<GreenField>, ContourStats)> {
    let mut probes = ProbeSet::default();
    for &d in derivs {
        for &ix in x_index {
            for &iy in y_index {
                probes.add(ix, iy, d);
            }
        }
    }
    let res = solver.evaluate(&probes, ts)?;
    let grid = &solver.profile.grid;
    let fields = derivs
        .iter()
        .map(|&d| {
            let (nx, nt, ny) = (x_index.len(), ts.len(), y_index.len());
            let mut g = vec![0.0; nx * nt * ny];
            for (a, &ix) in x_index.iter().enumerate() {
                for (b, &iy) in y_index.iter().enumerate() {
                    for it in 0..nt {
                        g[(a * nt + it) * ny + b] = res.at(ix, iy, d, it);
                    }
                }
            }
            let mut field = GreenField {
                deriv: d,
                t_values: ts.to_vec(),
                x_values: x_index.iter().map(|&i| grid.node(i)).collect(),
                y_values: y_index.iter().map(|&i| grid.node(i)).collect(),
                x_index: x_index.to_vec(),
                y_index: y_index.to_vec(),
                e: vec![0.0; g.len()],
                g_tilde: g.clone(),
                f: vec![0.0; g.len()],
                h_tilde: g.clone(),
                e_phase: vec![0.0; nt * ny],
                e_tilde: vec![0.0; g.len()],
                chi: ts.iter().map(|&t| cutoff_chi(t)).collect(),
                g,
            };
            if let Some(pole) = &solver.pole {
                decompose_first(&mut field, pole);
                decompose_second(&mut field, pole);
            }
            field
        })
        .collect();
    Ok((fields, res.stats))
}

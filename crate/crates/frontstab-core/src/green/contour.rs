//! Contour quadrature of e^{λt}G_λ over Γ̃ = Γ̃₁ ∪ Γ̃₂.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ReactionSystem;
use crate::numerics::{derivative, gauss_legendre};
use crate::par::Execution;
use crate::profile::FrontProfile;
use crate::resolvent::{resolvent_at_cached, ModeOptions, TableCache};
use crate::spectral::SpectralData;

/// ln(1e−12): the Γ̃₂ tail is dropped where e^{Re λ · t_min} falls below this.
const TAIL_LOG: f64 = -27.631_021_115_928_547;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConjugateMode {
    /// Integrate the lower half explicitly; the imaginary part of the result
    /// is then a genuine quadrature diagnostic.
    #[default]
    Explicit,
    /// Lower half from conjugate symmetry (half the resolvent solves).
    Mirror,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    /// λ = −η/2 + is, s ∈ [0, κ].
    Vertical,
    /// λ = −θ₁ − θ₂s + is, s ∈ [κ, s_cut].
    Sector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub segment: Segment,
    pub a: f64,
    pub b: f64,
    pub lower: bool,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub eta: f64,
    pub kappa: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Upper end of the Γ̃₂ parameter (|Im λ| at truncation).
    pub lambda_cut: f64,
    pub t_min: f64,
    /// Absolute tolerance on the node-doubling difference, summed over panels.
    pub tol: f64,
    pub order: usize,
    pub max_depth: u32,
    /// Geometric growth of the initial Γ̃₂ panels.
    pub panel_ratio: f64,
    pub conjugate: ConjugateMode,
}

impl ContourSpec {
    /// κ = η/4, so θ₂ = 1 and Γ̃₂ runs at 45°.
    pub fn new(eta: f64, t_min: f64) -> Result<Self> {
        Self::with_kappa(eta, eta / 4.0, t_min)
    }

    pub fn with_kappa(eta: f64, kappa: f64, t_min: f64) -> Result<Self> {
        if !(eta > 0.0 && kappa > 0.0 && t_min > 0.0) {
            return Err(invalid("contour needs η, κ, t_min > 0"));
        }
        let theta1 = eta / 4.0;
        let theta2 = eta / (4.0 * kappa);
        let lambda_cut = ((-TAIL_LOG / t_min - theta1) / theta2).max(2.0 * kappa);
        Ok(Self {
            eta,
            kappa,
            theta1,
            theta2,
            lambda_cut,
            t_min,
            tol: 1e-8,
            order: 16,
            max_depth: 12,
            panel_ratio: 2.0,
            conjugate: ConjugateMode::Explicit,
        })
    }

    pub fn lambda(&self, seg: Segment, s: f64) -> C {
        match seg {
            Segment::Vertical => C::new(-self.eta / 2.0, s),
            Segment::Sector => C::new(-self.theta1 - self.theta2 * s, s),
        }
    }

    pub fn dlambda(&self, seg: Segment) -> C {
        match seg {
            Segment::Vertical => C::new(0.0, 1.0),
            Segment::Sector => C::new(-self.theta2, 1.0),
        }
    }

    /// Starting panels of the upper half (and their mirrors when explicit):
    /// Γ̃₁ split in two, Γ̃₂ geometric from κ to the cut.
    pub fn panels(&self) -> Vec<Panel> {
        let mut up = vec![];
        let p = |segment, a, b| Panel { segment, a, b, lower: false, depth: 0 };
        up.push(p(Segment::Vertical, 0.0, self.kappa / 2.0));
        up.push(p(Segment::Vertical, self.kappa / 2.0, self.kappa));
        let mut a = self.kappa;
        let mut w = self.kappa;
        while a < self.lambda_cut {
            let b = (a + w).min(self.lambda_cut);
            up.push(p(Segment::Sector, a, b));
            a = b;
            w *= self.panel_ratio;
        }
        if self.conjugate == ConjugateMode::Explicit {
            let low: Vec<Panel> = up.iter().map(|q| Panel { lower: true, ..*q }).collect();
            up.extend(low);
        }
        up
    }

    /// Nodes λ and weights w (so that ∫ F dλ ≈ Σ w F(λ)) on one panel.
    pub fn panel_nodes(&self, p: &Panel, order: usize) -> Vec<(C, C)> {
        let (xs, ws) = gauss_legendre(order);
        let half = 0.5 * (p.b - p.a);
        let mid = 0.5 * (p.a + p.b);
        let dl = self.dlambda(p.segment);
        xs.iter()
            .zip(&ws)
            .map(|(&x, &w)| {
                let lam = self.lambda(p.segment, mid + half * x);
                let wt = dl * (w * half);
                if p.lower {
                    // traversed from −i·s_cut upwards: reversed orientation
                    (lam.conj(), -wt.conj())
                } else {
                    (lam, wt)
                }
            })
            .collect()
    }

    /// All starting-panel nodes of the upper half at the base order.
    pub fn nodes(&self) -> Vec<(C, C)> {
        self.panels().iter().filter(|p| !p.lower).flat_map(|p| self.panel_nodes(p, self.order)).collect()
    }

    /// Endpoints of Γ̃₁ (lower, upper).
    pub fn vertical_endpoints(&self) -> (C, C) {
        let top = self.lambda(Segment::Vertical, self.kappa);
        (top.conj(), top)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deriv {
    Value,
    X,
    Y,
}

impl Deriv {
    fn flags(self) -> (bool, bool) {
        match self {
            Deriv::Value => (false, false),
            Deriv::X => (true, false),
            Deriv::Y => (false, true),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Probe {
    pub ix: usize,
    pub iy: usize,
    pub deriv: Deriv,
}

/// Deduplicating probe list.
#[derive(Clone, Debug, Default)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
    index: HashMap<Probe, usize>,
}

impl ProbeSet {
    pub fn add(&mut self, ix: usize, iy: usize, deriv: Deriv) -> usize {
        let p = Probe { ix, iy, deriv };
        *self.index.entry(p).or_insert_with(|| {
            self.probes.push(p);
            self.probes.len() - 1
        })
    }

    pub fn get(&self, ix: usize, iy: usize, deriv: Deriv) -> Option<usize> {
        self.index.get(&Probe { ix, iy, deriv }).copied()
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

/// Spectral projection data for the translation eigenvalue:
/// ū′, ū″ = −f(ū), ψ̃ and ψ̃′ on the full grid.
#[derive(Clone, Debug)]
pub struct Pole {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_y: Vec<f64>,
}

impl Pole {
    pub fn new(sys: &ReactionSystem, profile: &FrontProfile, spectral: &SpectralData) -> Result<Self> {
        if sys.n != 1 {
            return Err(invalid("Green-function reconstruction is implemented for scalar systems"));
        }
        let h = profile.grid.h();
        Ok(Self {
            u1: profile.u_bar_prime.clone(),
            u2: profile.u_bar.iter().map(|&u| -sys.f1(u)).collect(),
            psi: spectral.psi_tilde.clone(),
            psi_y: derivative(&spectral.psi_tilde, h),
        })
    }

    /// ū′(x)ψ̃(y) or the requested first derivative of it.
    pub fn term(&self, ix: usize, iy: usize, deriv: Deriv) -> f64 {
        match deriv {
            Deriv::Value => self.u1[ix] * self.psi[iy],
            Deriv::X => self.u2[ix] * self.psi[iy],
            Deriv::Y => self.u1[ix] * self.psi_y[iy],
        }
    }
}

pub struct GreenSolver<'a> {
    pub sys: &'a ReactionSystem,
    pub profile: &'a FrontProfile,
    /// `None` when L has no eigenvalue enclosed between Γ and Γ̃.
    pub pole: Option<Pole>,
    pub contour: ContourSpec,
    pub modes: ModeOptions,
    pub exec: Execution,
    cache: TableCache,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContourStats {
    pub panels: usize,
    pub resolvent_solves: usize,
    /// Sum over accepted panels of max |I₂ₙ − Iₙ|/(2π).
    pub error_estimate: f64,
    pub imag_max: f64,
}

/// G at every (probe, t), probe-major.
#[derive(Clone, Debug)]
pub struct ContourResult {
    pub ts: Vec<f64>,
    pub probes: ProbeSet,
    pub values: Vec<f64>,
    pub imag: Vec<f64>,
    pub stats: ContourStats,
}

impl ContourResult {
    pub fn value(&self, probe: usize, it: usize) -> f64 {
        self.values[probe * self.ts.len() + it]
    }

    /// Lookup by node indices; panics if the probe was not requested.
    pub fn at(&self, ix: usize, iy: usize, deriv: Deriv, it: usize) -> f64 {
        let p = self.probes.get(ix, iy, deriv).expect("probe was not requested");
        self.value(p, it)
    }
}

impl<'a> GreenSolver<'a> {
    pub fn new(
        sys: &'a ReactionSystem,
        profile: &'a FrontProfile,
        spectral: Option<&SpectralData>,
        contour: ContourSpec,
        exec: Execution,
    ) -> Result<Self> {
        if sys.n != 1 {
            return Err(invalid("Green-function reconstruction is implemented for scalar systems"));
        }
        let pole = spectral.map(|s| Pole::new(sys, profile, s)).transpose()?;
        Ok(Self { sys, profile, pole, contour, modes: ModeOptions::default(), exec, cache: TableCache::default() })
    }

    fn kernels(&self, lambda: C, probes: &[Probe]) -> Result<Vec<C>> {
        let (modes, asm) = resolvent_at_cached(self.sys, self.profile, lambda, self.modes, &self.cache)?;
        Ok(probes
            .iter()
            .map(|p| {
                let (dx, dy) = p.deriv.flags();
                asm.kernel_d(&modes, p.ix, p.iy, dx, dy)
            })
            .collect())
    }

    /// Σ_nodes w e^{λt} G_λ for every (probe, t), probe-major.
    fn panel_sum(&self, nodes: &[(C, C)], probes: &[Probe], ts: &[f64]) -> Result<Vec<C>> {
        let ks = self.exec.map(nodes, |&(lam, _)| self.kernels(lam, probes));
        let nt = ts.len();
        let mut acc = vec![C::new(0.0, 0.0); probes.len() * nt];
        for ((lam, w), k) in nodes.iter().zip(ks) {
            let k = k?;
            let f: Vec<C> = ts.iter().map(|&t| w * (lam * t).exp()).collect();
            for (p, kp) in k.iter().enumerate() {
                let row = &mut acc[p * nt..(p + 1) * nt];
                for (a, fi) in row.iter_mut().zip(&f) {
                    *a += fi * kp;
                }
            }
        }
        Ok(acc)
    }

    /// G(x,t;y) = ū′(x)ψ̃(y) − (1/2πi)∫_Γ̃ e^{λt}G_λ(x,y) dλ at every probe and t,
    /// with per-panel node doubling until the difference is below tolerance.
    pub fn evaluate(&self, probes: &ProbeSet, ts: &[f64]) -> Result<ContourResult> {
        let spec = &self.contour;
        if ts.iter().any(|&t| !(t >= spec.t_min * (1.0 - 1e-12))) {
            return Err(invalid(format!("all t must be ≥ t_min = {}", spec.t_min)));
        }
        let ps = &probes.probes;
        let nt = ts.len();
        let mut total = vec![C::new(0.0, 0.0); ps.len() * nt];
        let mut stack = spec.panels();
        let panel_tol = spec.tol / 64.0;
        let (mut panels, mut solves, mut err) = (0usize, 0usize, 0.0f64);
        while let Some(p) = stack.pop() {
            let lo = self.panel_sum(&spec.panel_nodes(&p, spec.order), ps, ts)?;
            let hi = self.panel_sum(&spec.panel_nodes(&p, 2 * spec.order), ps, ts)?;
            solves += 3 * spec.order;
            let est = lo.iter().zip(&hi).fold(0.0f64, |m, (a, b)| m.max((a - b).norm())) / (2.0 * PI);
            if est <= panel_tol {
                total.iter_mut().zip(&hi).for_each(|(t, h)| *t += h);
                panels += 1;
                err += est;
            } else if p.depth >= spec.max_depth {
                return Err(Error::QuadratureUnconverged(format!(
                    "panel [{:.4}, {:.4}] on {:?}: node doubling changes the value by {est:.2e}",
                    p.a, p.b, p.segment
                )));
            } else {
                let m = 0.5 * (p.a + p.b);
                stack.push(Panel { b: m, depth: p.depth + 1, ..p });
                stack.push(Panel { a: m, depth: p.depth + 1, ..p });
            }
        }
        if spec.conjugate == ConjugateMode::Mirror {
            total.iter_mut().for_each(|v| *v -= v.conj());
        }
        let inv = C::new(0.0, -1.0 / (2.0 * PI));
        let mut values = vec![0.0; total.len()];
        let mut imag = vec![0.0; total.len()];
        let mut imag_max = 0.0f64;
        for (k, v) in total.iter().enumerate() {
            let p = &ps[k / nt];
            let pole = self.pole.as_ref().map_or(0.0, |q| q.term(p.ix, p.iy, p.deriv));
            let g = C::new(pole, 0.0) - v * inv;
            values[k] = g.re;
            imag[k] = g.im;
            imag_max = imag_max.max(g.im.abs());
        }
        Ok(ContourResult {
            ts: ts.to_vec(),
            probes: probes.clone(),
            values,
            imag,
            stats: ContourStats { panels, resolvent_solves: solves, error_estimate: err, imag_max },
        })
    }
}

/// Single-point convenience wrapper.
pub fn green_contour(solver: &GreenSolver, ix: usize, t: f64, iy: usize) -> Result<f64> {
    let mut ps = ProbeSet::default();
    ps.add(ix, iy, Deriv::Value);
    Ok(solver.evaluate(&ps, &[t])?.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{heat_kernel, Grid1D};

    #[test]
    fn contour_geometry() {
        let c = ContourSpec::new(0.375, 0.1).unwrap();
        let (lo, hi) = c.vertical_endpoints();
        assert_eq!(hi, C::new(-0.1875, c.kappa));
        assert_eq!(lo, hi.conj());
        // Γ̃₁ and Γ̃₂ meet
        assert!((c.lambda(Segment::Sector, c.kappa) - hi).norm() < 1e-15);
        assert!((c.theta2 - 1.0).abs() < 1e-15);
        // truncation where e^{Re λ t_min} = 1e−12
        let end = c.lambda(Segment::Sector, c.lambda_cut);
        assert!(((end.re * c.t_min).exp() - 1e-12).abs() < 1e-14);
        let nodes = c.nodes();
        assert!(nodes.iter().all(|(l, _)| l.re <= -c.eta / 2.0 + 1e-12));
    }

    #[test]
    fn decaying_heat_kernel_from_contour() {
        let g = Grid1D::symmetric(15.0, 751).unwrap();
        let sys = ReactionSystem::linear(1.0);
        let p = FrontProfile::uniform(g, vec![0.0]);
        let spec = ContourSpec::new(1.0, 0.5).unwrap();
        let solver = GreenSolver::new(&sys, &p, None, spec, Execution::default()).unwrap();
        let mut ps = ProbeSet::default();
        let j0 = g.nearest(0.0);
        for k in [-50, -20, 0, 25] {
            ps.add((j0 as i64 + k) as usize, j0, Deriv::Value);
        }
        let ts = [0.5, 1.0, 3.0];
        let t0 = std::time::Instant::now();
        let r = solver.evaluate(&ps, &ts).unwrap();
        eprintln!("{:?} in {:?}", r.stats, t0.elapsed());
        for (k, pr) in ps.probes.iter().enumerate() {
            for (it, &t) in ts.iter().enumerate() {
                let x = g.node(pr.ix);
                let exact = heat_kernel(x, t) * (-t).exp();
                assert!((r.value(k, it) - exact).abs() < 1e-6, "x={x} t={t}: {} vs {exact}", r.value(k, it));
            }
        }
        assert!((r.at(j0, j0, Deriv::Value, 1) - 0.103777).abs() < 1e-4);
        assert!(r.stats.imag_max < 1e-8);
    }
}

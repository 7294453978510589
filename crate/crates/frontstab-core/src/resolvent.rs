//! Resolvent kernel G_λ(x, y) of (L − λ)⁻¹ from decaying/growing mode bases
//! and their duals, plus a direct banded solve used as an oracle.
//!
//! First-order form: W = (w, w′), W′ = A(x, λ)W with
//! A = ((0, I), (λ − Df(ū), 0)). Dual (row) solutions Z̃ = (z, z′) pair with
//! solutions through Z̃𝒮W = z w′ − z′ w, which is constant in x.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{end_state_spectrum, ReactionSystem};
use crate::numerics::Grid1D;
use crate::profile::FrontProfile;
use crate::spectral::{decay_exponents, LinearOperator, SpectralData};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeOptions {
    /// Target |μ|·dx per RK4 substep.
    pub substep: f64,
    /// Reject bases whose condition number exceeds this.
    pub max_cond: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { substep: 0.01, max_cond: 1e12 }
    }
}

/// Samples of a matrix-valued function on a run of grid nodes, stored
/// normalised (max entry 1) with a separate log scale. Row-major per node.
#[derive(Clone, Debug)]
pub struct ScaledField {
    pub first: usize,
    pub rows: usize,
    pub cols: usize,
    data: Vec<C>,
    logs: Vec<f64>,
}

impl ScaledField {
    fn with_capacity(first: usize, rows: usize, cols: usize, nodes: usize) -> Self {
        Self {
            first,
            rows,
            cols,
            data: vec![ZERO; rows * cols * nodes],
            logs: vec![0.0; nodes],
        }
    }

    pub fn nodes(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.logs.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.nodes().contains(&i)
    }

    /// Normalised entries at node `i` (row-major) and their log scale.
    pub fn at(&self, i: usize) -> (&[C], f64) {
        let k = i - self.first;
        let sz = self.rows * self.cols;
        (&self.data[k * sz..(k + 1) * sz], self.logs[k])
    }

    pub fn matrix(&self, i: usize) -> DMatrix<C> {
        let (d, l) = self.at(i);
        DMatrix::from_row_slice(self.rows, self.cols, d) * C::new(l.exp(), 0.0)
    }

    fn set(&mut self, i: usize, vals: &[C], log: f64) {
        let k = i - self.first;
        let sz = self.rows * self.cols;
        let s = vals.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        for (dst, v) in self.data[k * sz..(k + 1) * sz].iter_mut().zip(vals) {
            *dst = v / s;
        }
        self.logs[k] = log + s.ln();
    }

    fn shift_logs(&mut self, by: f64) {
        self.logs.iter_mut().for_each(|l| *l += by);
    }
}

#[derive(Clone, Debug)]
pub struct ModeBasis {
    pub lambda: C,
    pub n: usize,
    /// Node index playing the role of x = 0 (matching point).
    pub split: usize,
    /// Decaying at +∞ on [split, N); growing at +∞ on [split, N).
    pub phi_plus: ScaledField,
    pub psi_plus: ScaledField,
    /// Decaying at −∞ on [0, split]; growing at −∞ on [0, split].
    pub phi_minus: ScaledField,
    pub psi_minus: ScaledField,
    /// Dual rows Z̃ = (z, z′) with W̃𝒮W = I against the same-side basis.
    pub phi_tilde_plus: ScaledField,
    pub psi_tilde_plus: ScaledField,
    pub phi_tilde_minus: ScaledField,
    pub psi_tilde_minus: ScaledField,
}

/// 𝒮 = ((0, I), (−I, 0)).
pub fn pairing_matrix(n: usize) -> DMatrix<C> {
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = ONE;
        s[(n + i, i)] = -ONE;
    }
    s
}

/// Df(ū(x)) sampled at every half-substep point
/// x_min + j·h/(2m), row-major n×n per point.
#[derive(Debug)]
pub struct DfTable {
    pub m: usize,
    n: usize,
    vals: Vec<f64>,
}

impl DfTable {
    pub fn new(sys: &ReactionSystem, profile: &FrontProfile, m: usize) -> Self {
        let n = sys.n;
        let g = profile.grid;
        let pts = (g.n - 1) * 2 * m + 1;
        let step = g.h() / (2 * m) as f64;
        let mut vals = vec![0.0; pts * n * n];
        let mut u = vec![0.0; n];
        for j in 0..pts {
            let x = if j % (2 * m) == 0 { g.node(j / (2 * m)) } else { g.x_min + j as f64 * step };
            for (c, uc) in u.iter_mut().enumerate() {
                *uc = profile.eval(c, x).0;
            }
            sys.df_into(&u, &mut vals[j * n * n..(j + 1) * n * n]);
        }
        Self { m, n, vals }
    }

    fn at(&self, j: usize) -> &[f64] {
        &self.vals[j * self.n * self.n..(j + 1) * self.n * self.n]
    }
}

/// Shared per-substep-count tables, so a sweep over many λ builds each
/// table once.
#[derive(Debug, Default)]
pub struct TableCache {
    tables: std::sync::Mutex<std::collections::HashMap<usize, std::sync::Arc<DfTable>>>,
}

impl TableCache {
    pub fn get(&self, sys: &ReactionSystem, profile: &FrontProfile, m: usize) -> std::sync::Arc<DfTable> {
        if let Some(t) = self.tables.lock().unwrap().get(&m) {
            return t.clone();
        }
        let t = std::sync::Arc::new(DfTable::new(sys, profile, m));
        self.tables.lock().unwrap().entry(m).or_insert(t).clone()
    }
}

/// Substeps per cell: power of two with |μ|·dx ≤ target, μ ~ √(|λ| + max|σ|).
pub fn substep_count(lambda: C, sigma_scale: f64, h: f64, target: f64) -> usize {
    let mu = (lambda.norm() + sigma_scale).sqrt();
    ((mu * h / target).ceil() as usize).max(1).next_power_of_two()
}

fn sigma_scale(sys: &ReactionSystem) -> Result<f64> {
    let ends = end_state_spectrum(sys)?;
    Ok(ends.sigma_minus.iter().chain(&ends.sigma_plus).map(|s| s.norm()).fold(0.0, f64::max))
}

struct Coefficients<'a> {
    n: usize,
    lambda: C,
    table: &'a DfTable,
}

impl Coefficients<'_> {
    /// B = λ − Df(ū) at half-substep point `j`, row-major into `out`.
    fn b_at(&self, j: usize, out: &mut [C]) {
        let n = self.n;
        let d = self.table.at(j);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = C::new(-d[r * n + c], 0.0) + if r == c { self.lambda } else { ZERO };
            }
        }
    }
}

/// y′ = A y for all columns of the 2n×k row-major block `y`.
fn apply_a(n: usize, k: usize, b: &[C], y: &[C], out: &mut [C]) {
    // top: w′ = p
    out[..n * k].copy_from_slice(&y[n * k..2 * n * k]);
    // bottom: p′ = B w
    for r in 0..n {
        for j in 0..k {
            let mut acc = ZERO;
            for c in 0..n {
                acc += b[r * n + c] * y[c * k + j];
            }
            out[(n + r) * k + j] = acc;
        }
    }
}

/// Integrate W′ = A W from node `from` to node `to` (either direction),
/// starting from the 2n×k block `w0`, storing every node.
fn march(
    coef: &Coefficients,
    grid: Grid1D,
    from: usize,
    to: usize,
    w0: &[C],
    k: usize,
    opts: ModeOptions,
) -> Result<ScaledField> {
    let n = coef.n;
    let h = grid.h();
    let nodes = from.abs_diff(to) + 1;
    let first = from.min(to);
    let mut field = ScaledField::with_capacity(first, 2 * n, k, nodes);
    let m = coef.table.m;
    let forward = to >= from;
    let dx = if forward { h / m as f64 } else { -h / m as f64 };
    let sz = 2 * n * k;
    let mut y = w0.to_vec();
    let s0 = y.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    y.iter_mut().for_each(|v| *v /= s0);
    let mut log = s0.ln();
    field.set(from, &y, log);
    log = field.at(from).1;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; sz], vec![ZERO; sz], vec![ZERO; sz], vec![ZERO; sz], vec![ZERO; sz]);
    let (mut b0, mut bm, mut b1) = (vec![ZERO; n * n], vec![ZERO; n * n], vec![ZERO; n * n]);
    let mut idx = from;
    // Half-substep point index, moving by ±1 per half substep.
    let mut j = from * 2 * m;
    coef.b_at(j, &mut b0);
    for step in 1..nodes {
        for _ in 0..m {
            let (jm, j1) = if forward { (j + 1, j + 2) } else { (j - 1, j - 2) };
            coef.b_at(jm, &mut bm);
            coef.b_at(j1, &mut b1);
            apply_a(n, k, &b0, &y, &mut k1);
            for i in 0..sz {
                tmp[i] = y[i] + k1[i] * (0.5 * dx);
            }
            apply_a(n, k, &bm, &tmp, &mut k2);
            for i in 0..sz {
                tmp[i] = y[i] + k2[i] * (0.5 * dx);
            }
            apply_a(n, k, &bm, &tmp, &mut k3);
            for i in 0..sz {
                tmp[i] = y[i] + k3[i] * dx;
            }
            apply_a(n, k, &b1, &tmp, &mut k4);
            for i in 0..sz {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dx / 6.0);
            }
            j = j1;
            std::mem::swap(&mut b0, &mut b1);
        }
        idx = if forward { idx + 1 } else { idx - 1 };
        if !y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::OverflowUncontrolled(format!("non-finite mode values at node {idx}")));
        }
        field.set(idx, &y, log);
        let (d, l) = field.at(idx);
        y.copy_from_slice(d);
        log = l;
        if k > 1 && step % 50 == 0 {
            let cond = column_condition(&y, 2 * n, k);
            if cond > opts.max_cond {
                return Err(Error::OverflowUncontrolled(format!(
                    "mode columns lost independence (cond {cond:.3e}) at node {idx}"
                )));
            }
        }
    }
    Ok(field)
}

fn column_condition(y: &[C], rows: usize, cols: usize) -> f64 {
    let m = DMatrix::from_row_slice(rows, cols, y);
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Columns spanning a complement of the column space of `p` (2n×n).
fn complement(p: &DMatrix<C>) -> DMatrix<C> {
    let (rows, cols) = p.shape();
    let q = p.clone().qr().q();
    let mut basis: Vec<nalgebra::DVector<C>> = (0..cols).map(|j| q.column(j).into_owned()).collect();
    let mut out = DMatrix::zeros(rows, rows - cols);
    let mut filled = 0;
    // Greedy Gram–Schmidt over unit vectors, largest residual first.
    while filled < rows - cols {
        let mut best: Option<(f64, nalgebra::DVector<C>)> = None;
        for e in 0..rows {
            let mut v = nalgebra::DVector::<C>::zeros(rows);
            v[e] = ONE;
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
            let nv = v.norm();
            if best.as_ref().map_or(true, |(m, _)| nv > *m) {
                best = Some((nv, v / C::new(nv, 0.0)));
            }
        }
        let (_, v) = best.unwrap();
        out.set_column(filled, &v);
        basis.push(v);
        filled += 1;
    }
    out
}

/// Dual rows of [Φ, Ψ] at each node: W̃ = [Φ, Ψ]⁻¹ 𝒮⁻¹, split into the
/// first n rows (dual to Φ) and the last n rows (dual to Ψ).
fn duals(phi: &ScaledField, psi: &ScaledField, n: usize) -> Result<(ScaledField, ScaledField)> {
    let nodes = phi.nodes();
    let count = nodes.len();
    let mut dphi = ScaledField::with_capacity(phi.first, n, 2 * n, count);
    let mut dpsi = ScaledField::with_capacity(phi.first, n, 2 * n, count);
    let mut row_buf = vec![ZERO; 2 * n * n];
    for i in nodes {
        let (a, la) = phi.at(i);
        let (b, lb) = psi.at(i);
        let x = DMatrix::from_fn(2 * n, 2 * n, |r, c| if c < n { a[r * n + c] } else { b[r * n + c - n] });
        let inv = x.try_inverse().ok_or_else(|| Error::DegenerateBasis("matching matrix is singular".into()))?;
        for (block, field, l) in [(0usize, &mut dphi, la), (n, &mut dpsi, lb)] {
            for r in 0..n {
                // (a, b)𝒮⁻¹ = (b, −a)
                for c in 0..n {
                    row_buf[r * 2 * n + c] = inv[(block + r, n + c)];
                    row_buf[r * 2 * n + n + c] = -inv[(block + r, c)];
                }
            }
            field.set(i, &row_buf, -l);
        }
    }
    Ok((dphi, dpsi))
}

pub fn integrate_modes(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    lambda: C,
    opts: ModeOptions,
) -> Result<ModeBasis> {
    integrate_modes_cached(sys, profile, lambda, opts, &TableCache::default())
}

pub fn integrate_modes_cached(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    lambda: C,
    opts: ModeOptions,
    cache: &TableCache,
) -> Result<ModeBasis> {
    let n = sys.n;
    let g = profile.grid;
    let ends = end_state_spectrum(sys)?;
    let md = decay_exponents(&ends, lambda)?;
    let split = g.nearest(0.0);
    let last = g.n - 1;
    let m = substep_count(lambda, sigma_scale(sys)?, g.h(), opts.substep);
    let table = cache.get(sys, profile, m);
    let coef = Coefficients { n, lambda, table: &table };

    let seed = |vs: &[Vec<C>]| -> Vec<C> {
        let mut out = vec![ZERO; 2 * n * n];
        for (j, v) in vs.iter().enumerate() {
            for r in 0..2 * n {
                out[r * n + j] = v[r];
            }
        }
        out
    };
    let mut phi_plus = march(&coef, g, last, split, &seed(&md.plus.v_neg), n, opts)?;
    let mut phi_minus = march(&coef, g, 0, split, &seed(&md.minus.v_pos), n, opts)?;
    let lpp = phi_plus.at(split).1;
    let lpm = phi_minus.at(split).1;
    phi_plus.shift_logs(-lpp);
    phi_minus.shift_logs(-lpm);
    let pp = DMatrix::from_row_slice(2 * n, n, phi_plus.at(split).0);
    let pm = DMatrix::from_row_slice(2 * n, n, phi_minus.at(split).0);
    let x0 = DMatrix::from_fn(2 * n, 2 * n, |r, c| if c < n { pp[(r, c)] } else { pm[(r, c - n)] });
    let sv = x0.singular_values();
    let rcond = sv.min() / sv.max();
    if !(rcond > 1e-13) {
        return Err(Error::DegenerateBasis(format!("(Phi+, Phi-) reciprocal condition {rcond:e} at lambda = {lambda}")));
    }
    // Growing modes: any complement of the decaying subspace, integrated
    // outward from the matching point (the stable direction).
    let to_rows = |m: &DMatrix<C>| -> Vec<C> { (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect() };
    let psi_plus = march(&coef, g, split, last, &to_rows(&complement(&pp)), n, opts)?;
    let psi_minus = march(&coef, g, split, 0, &to_rows(&complement(&pm)), n, opts)?;
    let (phi_tilde_plus, psi_tilde_plus) = duals(&phi_plus, &psi_plus, n)?;
    let (phi_tilde_minus, psi_tilde_minus) = duals(&phi_minus, &psi_minus, n)?;
    Ok(ModeBasis {
        lambda,
        n,
        split,
        phi_plus,
        psi_plus,
        phi_minus,
        psi_minus,
        phi_tilde_plus,
        psi_tilde_plus,
        phi_tilde_minus,
        psi_tilde_minus,
    })
}

/// Integrate a single block solution between two nodes (diagnostics).
pub fn integrate_solution(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    lambda: C,
    from: usize,
    to: usize,
    w0: &DMatrix<C>,
    opts: ModeOptions,
) -> Result<ScaledField> {
    let m = substep_count(lambda, sigma_scale(sys)?, profile.grid.h(), opts.substep);
    let table = DfTable::new(sys, profile, m);
    let coef = Coefficients { n: sys.n, lambda, table: &table };
    let k = w0.ncols();
    let rows: Vec<C> = (0..w0.nrows()).flat_map(|r| (0..k).map(move |c| w0[(r, c)])).collect();
    march(&coef, profile.grid, from, to, &rows, k, opts)
}

impl ModeBasis {
    /// max |W̃𝒮W − I| over every node of both half-lines, block by block
    /// in normalised form (the diagonal blocks carry cancelling scales).
    pub fn duality_deviation(&self) -> f64 {
        let n = self.n;
        let s = pairing_matrix(n);
        let mut worst: f64 = 0.0;
        for (prim, dual) in [
            ([&self.phi_plus, &self.psi_plus], [&self.phi_tilde_plus, &self.psi_tilde_plus]),
            ([&self.phi_minus, &self.psi_minus], [&self.phi_tilde_minus, &self.psi_tilde_minus]),
        ] {
            for i in prim[0].nodes() {
                for (a, z) in dual.iter().enumerate() {
                    for (b, w) in prim.iter().enumerate() {
                        let (zd, lz) = z.at(i);
                        let (wd, lw) = w.at(i);
                        let zm = DMatrix::from_row_slice(n, 2 * n, zd);
                        let wm = DMatrix::from_row_slice(2 * n, n, wd);
                        let mut p = zm * &s * wm;
                        if a == b {
                            p *= C::new((lz + lw).exp(), 0.0);
                            p -= DMatrix::<C>::identity(n, n);
                        }
                        worst = worst.max(cmax(&p));
                    }
                }
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// assembly

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Basis {
    PhiPlus,
    PsiPlus,
    PhiMinus,
    PsiMinus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dual {
    PhiPlus,
    PsiPlus,
    PhiMinus,
    PsiMinus,
}

#[derive(Clone, Debug)]
struct Term {
    basis: Basis,
    coef: DMatrix<C>,
    dual: Dual,
}

#[derive(Clone, Debug)]
pub struct ResolventAssembly {
    pub lambda: C,
    pub n: usize,
    pub m_plus: DMatrix<C>,
    pub m_minus: DMatrix<C>,
    pub d_plus: DMatrix<C>,
    pub d_minus: DMatrix<C>,
    /// |M⁺(linear solve) − M⁺(duality form)|.
    pub m_plus_discrepancy: f64,
    /// |d⁺ − d⁻|.
    pub d_discrepancy: f64,
    regions: [Vec<Term>; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Limit from x > y when x = y.
    Above,
    /// Limit from x < y when x = y.
    Below,
}

pub fn assemble_resolvent(modes: &ModeBasis) -> Result<ResolventAssembly> {
    let n = modes.n;
    let sp = modes.split;
    let s = pairing_matrix(n);
    let id = DMatrix::<C>::identity(n, n);
    let pp = modes.phi_plus.matrix(sp);
    let pm = modes.phi_minus.matrix(sp);
    let qp = modes.psi_plus.matrix(sp);
    let qm = modes.psi_minus.matrix(sp);
    let x = DMatrix::from_fn(2 * n, 2 * n, |r, c| if c < n { pp[(r, c)] } else { pm[(r, c - n)] });
    let lu = x.lu();
    let km = lu.solve(&qm).ok_or_else(|| Error::DegenerateBasis("matching matrix is singular".into()))?;
    let kp = lu.solve(&qp).ok_or_else(|| Error::DegenerateBasis("matching matrix is singular".into()))?;
    let m_plus = km.rows(0, n).into_owned();
    let d_plus = -km.rows(n, n).into_owned();
    let m_minus = kp.rows(n, n).into_owned();

    let tpsi_m = modes.psi_tilde_minus.matrix(sp);
    let tphi_m = modes.phi_tilde_minus.matrix(sp);
    let tphi_p = modes.phi_tilde_plus.matrix(sp);
    let m_plus_dual = (&tpsi_m * &s * &pp).try_inverse().ok_or_else(|| Error::DegenerateBasis("matching matrix is singular".into()))?;
    let d_minus = &tphi_m * &s * &pp * &m_plus;
    let scale = cmax(&m_plus).max(1.0);
    let m_plus_discrepancy = cmax(&(&m_plus - &m_plus_dual)) / scale;
    let d_discrepancy = cmax(&(&d_plus - &d_minus)) / cmax(&d_plus).max(1.0);

    let t = |basis, coef, dual| Term { basis, coef, dual };
    let c5 = &m_plus * (&tpsi_m * &s * &qp);
    let c6 = -(&tphi_p * &s * &pm) * &m_minus;
    let regions = [
        // 1: y ≤ 0 ≤ x
        vec![t(Basis::PhiPlus, m_plus.clone(), Dual::PsiMinus)],
        // 2: y ≤ x ≤ 0
        vec![t(Basis::PhiMinus, d_plus.clone(), Dual::PsiMinus), t(Basis::PsiMinus, id.clone(), Dual::PsiMinus)],
        // 3: x ≤ 0 ≤ y
        vec![t(Basis::PhiMinus, -m_minus.clone(), Dual::PsiPlus)],
        // 4: x ≤ y ≤ 0
        vec![t(Basis::PhiMinus, d_minus.clone(), Dual::PsiMinus), t(Basis::PhiMinus, -id.clone(), Dual::PhiMinus)],
        // 5: 0 ≤ y ≤ x
        vec![t(Basis::PhiPlus, id.clone(), Dual::PhiPlus), t(Basis::PhiPlus, c5, Dual::PsiPlus)],
        // 6: 0 ≤ x ≤ y
        vec![t(Basis::PhiPlus, c6, Dual::PsiPlus), t(Basis::PsiPlus, -id, Dual::PsiPlus)],
    ];
    Ok(ResolventAssembly {
        lambda: modes.lambda,
        n,
        m_plus,
        m_minus,
        d_plus,
        d_minus,
        m_plus_discrepancy,
        d_discrepancy,
        regions,
    })
}

impl ResolventAssembly {
    fn region(&self, modes: &ModeBasis, ix: usize, iy: usize, side: Side) -> usize {
        let sp = modes.split;
        let above = ix > iy || (ix == iy && side == Side::Above);
        if iy <= sp {
            if above {
                if ix > sp {
                    0
                } else {
                    1
                }
            } else {
                3
            }
        } else if above {
            4
        } else if ix >= sp {
            5
        } else {
            2
        }
    }

    /// Row-major 2n×2n block ((G, G_y), (G_x, G_xy)) at grid nodes (ix, iy).
    pub fn block(&self, modes: &ModeBasis, ix: usize, iy: usize, side: Side) -> DMatrix<C> {
        let n = self.n;
        let mut out = DMatrix::<C>::zeros(2 * n, 2 * n);
        for term in &self.regions[self.region(modes, ix, iy, side)] {
            let (w, lw) = basis_field(modes, term.basis).at(ix);
            let (z, lz) = dual_field(modes, term.dual).at(iy);
            let scale = C::new((lw + lz).exp(), 0.0);
            let wm = DMatrix::from_row_slice(2 * n, n, w);
            let zm = DMatrix::from_row_slice(n, 2 * n, z);
            out += wm * &term.coef * zm * scale;
        }
        out
    }

    /// G_λ(x, y) (row-major n×n) at grid nodes, or one of its first
    /// derivatives (`dx`: ∂x, `dy`: ∂y), without allocation.
    pub fn kernel_into(&self, modes: &ModeBasis, ix: usize, iy: usize, dx: bool, dy: bool, out: &mut [C]) {
        let n = self.n;
        let (ro, co) = (if dx { n } else { 0 }, if dy { n } else { 0 });
        out.iter_mut().for_each(|v| *v = ZERO);
        for term in &self.regions[self.region(modes, ix, iy, Side::Above)] {
            let (w, lw) = basis_field(modes, term.basis).at(ix);
            let (z, lz) = dual_field(modes, term.dual).at(iy);
            let scale = (lw + lz).exp();
            if scale == 0.0 {
                continue;
            }
            for r in 0..n {
                for c in 0..n {
                    let mut acc = ZERO;
                    for a in 0..n {
                        for b in 0..n {
                            acc += w[(ro + r) * n + a] * term.coef[(a, b)] * z[b * 2 * n + co + c];
                        }
                    }
                    out[r * n + c] += acc * scale;
                }
            }
        }
    }

    /// Scalar systems: G_λ(x, y) and its derivatives.
    pub fn kernel_d(&self, modes: &ModeBasis, ix: usize, iy: usize, dx: bool, dy: bool) -> C {
        debug_assert_eq!(self.n, 1);
        let mut out = [ZERO];
        self.kernel_into(modes, ix, iy, dx, dy, &mut out);
        out[0]
    }

    pub fn kernel(&self, modes: &ModeBasis, ix: usize, iy: usize) -> C {
        self.kernel_d(modes, ix, iy, false, false)
    }

    /// Deviation of the four jump identities at node `iy`:
    /// [G] = 0, [G_x] = I, [G_y] = −I, [G_xy] = 0.
    pub fn jump_residual(&self, modes: &ModeBasis, iy: usize) -> f64 {
        let n = self.n;
        let jump = self.block(modes, iy, iy, Side::Above) - self.block(modes, iy, iy, Side::Below);
        let mut expect = DMatrix::<C>::zeros(2 * n, 2 * n);
        for i in 0..n {
            expect[(i, n + i)] = -ONE;
            expect[(n + i, i)] = ONE;
        }
        cmax(&(jump - expect))
    }

    pub fn max_coefficient(&self) -> f64 {
        [&self.m_plus, &self.m_minus, &self.d_plus, &self.d_minus]
            .iter()
            .map(|m| cmax(m))
            .fold(0.0, f64::max)
    }
}

fn cmax(m: &DMatrix<C>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.norm()))
}

fn basis_field(m: &ModeBasis, b: Basis) -> &ScaledField {
    match b {
        Basis::PhiPlus => &m.phi_plus,
        Basis::PsiPlus => &m.psi_plus,
        Basis::PhiMinus => &m.phi_minus,
        Basis::PsiMinus => &m.psi_minus,
    }
}

fn dual_field(m: &ModeBasis, d: Dual) -> &ScaledField {
    match d {
        Dual::PhiPlus => &m.phi_tilde_plus,
        Dual::PsiPlus => &m.psi_tilde_plus,
        Dual::PhiMinus => &m.phi_tilde_minus,
        Dual::PsiMinus => &m.psi_tilde_minus,
    }
}

/// Modes and assembly together.
pub fn resolvent_at(sys: &ReactionSystem, profile: &FrontProfile, lambda: C, opts: ModeOptions) -> Result<(ModeBasis, ResolventAssembly)> {
    resolvent_at_cached(sys, profile, lambda, opts, &TableCache::default())
}

pub fn resolvent_at_cached(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    lambda: C,
    opts: ModeOptions,
    cache: &TableCache,
) -> Result<(ModeBasis, ResolventAssembly)> {
    let modes = integrate_modes_cached(sys, profile, lambda, opts, cache)?;
    let asm = assemble_resolvent(&modes)?;
    Ok((modes, asm))
}

/// Pole-subtracted kernel G̃_λ = G_λ + ū′(x)ψ̃(y)/λ (scalar systems).
pub fn regularised_kernel(asm: &ResolventAssembly, modes: &ModeBasis, profile: &FrontProfile, spectral: &SpectralData, ix: usize, iy: usize) -> C {
    asm.kernel(modes, ix, iy) + profile.u_bar_prime[ix] * spectral.psi_tilde[iy] / asm.lambda
}

// ---------------------------------------------------------------------------
// direct oracle

/// Columns of G_λ(·, y) on the full grid from (L_h − λ)g = e_i / h,
/// one column per component of the delta. Node-major, zero at the ends.
pub fn resolvent_direct(op: &LinearOperator, lambda: C, iy: usize) -> Result<Vec<Vec<C>>> {
    resolvent_direct_scaled(op, lambda, iy, 1.0)
}

pub fn resolvent_direct_scaled(op: &LinearOperator, lambda: C, iy: usize, amplitude: f64) -> Result<Vec<Vec<C>>> {
    let n = op.n;
    let g = op.grid;
    if iy == 0 || iy + 1 >= g.n {
        return Err(crate::error::invalid("delta must sit on an interior node"));
    }
    let lu = op.matrix.shifted(lambda, |v| C::new(v, 0.0)).lu()?;
    let h = g.h();
    (0..n)
        .map(|c| {
            let mut rhs = vec![ZERO; op.dim()];
            rhs[(iy - 1) * n + c] = C::new(amplitude / h, 0.0);
            lu.solve_in_place(&mut rhs);
            let mut full = vec![ZERO; g.n * n];
            full[n..g.n * n - n].copy_from_slice(&rhs);
            Ok(full)
        })
        .collect()
}

/// Direct oracle with the second-order stencil on the profile grid and on
/// its refinement, Richardson-combined (4 g_{h/2} − g_h)/3 at the coarse
/// nodes. The five-point stencil loses an order at the delta node, the
/// three-point one does not.
pub fn resolvent_direct_richardson(sys: &ReactionSystem, profile: &FrontProfile, lambda: C, iy: usize) -> Result<Vec<Vec<C>>> {
    let n = sys.n;
    let coarse = crate::spectral::assemble_linearization(sys, profile, crate::spectral::StencilOrder::Second);
    let fine_grid = profile.grid.refine();
    let mut samples = Vec::with_capacity(fine_grid.n * n);
    for x in fine_grid.nodes() {
        for c in 0..n {
            samples.push(profile.eval(c, x).0);
        }
    }
    let fine_profile = FrontProfile::from_samples(sys, fine_grid, samples, profile.anchor)?;
    let fine = crate::spectral::assemble_linearization(sys, &fine_profile, crate::spectral::StencilOrder::Second);
    let gc = resolvent_direct(&coarse, lambda, iy)?;
    let gf = resolvent_direct(&fine, lambda, 2 * iy)?;
    Ok(gc
        .iter()
        .zip(&gf)
        .map(|(a, b)| {
            (0..profile.grid.n * n)
                .map(|k| {
                    let (i, c) = (k / n, k % n);
                    (b[2 * i * n + c] * 4.0 - a[k]) / 3.0
                })
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// bounded-frequency bound

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventBound {
    /// Minimal C with |G̃_λ(x, y)| ≤ C e^{−η′(|x|+|y|)} over pairs with xy ≤ 0.
    pub c: f64,
    /// Minimal C with |G̃_λ(x, y)| ≤ C e^{−η′|x−y|} over same-side pairs.
    pub c_same_side: f64,
    pub eta_prime: f64,
    pub lambda_count: usize,
    pub sample_count: usize,
    /// Largest |M±|, |d±| over the λ samples.
    pub coefficient_bound: f64,
    pub pass: bool,
}

pub fn verify_resolvent_bound(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    spectral: &SpectralData,
    lambdas: &[C],
    nodes: &[usize],
    opts: ModeOptions,
    exec: crate::Execution,
) -> Result<ResolventBound> {
    let xs = profile.grid.nodes();
    let eta_prime = spectral.eta_prime;
    let cache = TableCache::default();
    let per: Vec<Result<(f64, f64, f64)>> = exec.map(lambdas, |&lam| {
        let (modes, asm) = resolvent_at_cached(sys, profile, lam, opts, &cache)?;
        let (mut c, mut cs) = (0.0f64, 0.0f64);
        for &ix in nodes {
            for &iy in nodes {
                let v = regularised_kernel(&asm, &modes, profile, spectral, ix, iy).norm();
                let (x, y) = (xs[ix], xs[iy]);
                if x * y <= 0.0 {
                    c = c.max(v * (eta_prime * (x.abs() + y.abs())).exp());
                } else {
                    cs = cs.max(v * (eta_prime * (x - y).abs()).exp());
                }
            }
        }
        Ok((c, cs, asm.max_coefficient()))
    });
    let (mut c, mut cs, mut coef) = (0.0f64, 0.0f64, 0.0f64);
    for r in per {
        let (a, b, d) = r?;
        c = c.max(a);
        cs = cs.max(b);
        coef = coef.max(d);
    }
    Ok(ResolventBound {
        c,
        c_same_side: cs,
        eta_prime,
        lambda_count: lambdas.len(),
        sample_count: lambdas.len() * nodes.len() * nodes.len(),
        coefficient_bound: coef,
        pass: c.is_finite() && cs.is_finite(),
    })
}

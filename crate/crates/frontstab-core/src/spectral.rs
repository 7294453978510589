//! Discretised linearisation L = ∂xx + Df(ū), the spectral-gap check, the
//! adjoint zero mode and the far-field spatial exponents.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{inverse_iteration, top_eigenvalues_symmetric, BandMatrix};
use crate::model::{end_state_spectrum, EndStateSpectrum, ReactionSystem};
use crate::numerics::{inner, Grid1D};
use crate::profile::FrontProfile;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilOrder {
    Second,
    #[default]
    Fourth,
}

/// L on the interior nodes (homogeneous Dirichlet), unknowns node-major.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub grid: Grid1D,
    pub n: usize,
    pub order: StencilOrder,
    pub matrix: BandMatrix<f64>,
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Apply to a full-grid field (boundary values ignored, result on the
    /// full grid with zero ends).
    pub fn apply_full(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let interior = &v[n..v.len() - n];
        let w = self.matrix.matvec(interior);
        let mut out = vec![0.0; v.len()];
        out[n..v.len() - n].copy_from_slice(&w);
        out
    }
}

pub fn assemble_linearization(sys: &ReactionSystem, profile: &FrontProfile, order: StencilOrder) -> LinearOperator {
    let g = profile.grid;
    let n = sys.n;
    let m = g.n - 2;
    let h2 = g.h() * g.h();
    let reach = match order {
        StencilOrder::Second => 1,
        StencilOrder::Fourth => 2,
    };
    let bw = reach * n + n - 1;
    let mut a = BandMatrix::<f64>::zeros(m * n, bw, bw);
    let stencil: &[(isize, f64)] = match order {
        StencilOrder::Second => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        StencilOrder::Fourth => &[(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)],
    };
    let mut jac = vec![0.0; n * n];
    for i in 0..m {
        for &(off, w) in stencil {
            let j = i as isize + off;
            let coef = w / h2;
            if j >= 0 && (j as usize) < m {
                for c in 0..n {
                    a.add_to(i * n + c, j as usize * n + c, coef);
                }
            } else if j == -2 || j as usize == m + 1 {
                // Odd reflection through the Dirichlet node: u_{-1} = -u_1.
                for c in 0..n {
                    a.add_to(i * n + c, i * n + c, -coef);
                }
            }
        }
        sys.df_into(profile.state(i + 1), &mut jac);
        for r in 0..n {
            for c in 0..n {
                a.add_to(i * n + r, i * n + c, jac[r * n + c]);
            }
        }
    }
    LinearOperator { grid: g, n, order, matrix: a }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenKind {
    Zero,
    Discrete,
    Continuum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// |zero_eig| must be below this.
    pub tol: f64,
    /// η₀ = factor · min(η/4, η′), factor ∈ (0, 1).
    pub eta0_factor: f64,
    /// How many of the rightmost eigenvalues to resolve.
    pub count: usize,
    /// Unknown count above which the non-symmetric path works on a coarsened copy.
    pub dense_limit: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { tol: 1e-6, eta0_factor: 0.9, count: 40, dense_limit: 1600 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralData {
    /// Rightmost eigenvalues of the discretised L, sorted by real part, descending.
    pub eigenvalues: Vec<Complex64>,
    pub kinds: Vec<EigenKind>,
    /// Fraction of each eigenvector's mass in the outer half of the domain.
    pub participation: Vec<f64>,
    pub zero_eig: Complex64,
    pub zero_mode_cosine: f64,
    /// Full-grid node-major samples; `phi` is exactly ū′.
    pub phi: Vec<f64>,
    pub psi_tilde: Vec<f64>,
    /// Largest non-zero discrete eigenvalue (real part), if any.
    pub lambda1: Option<f64>,
    pub essential_edge: f64,
    pub eta: f64,
    pub eta_prime: f64,
    pub eta0: f64,
    pub biorthogonality: f64,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectralData {
    pub fn psi_component(&self, n: usize, c: usize) -> Vec<f64> {
        self.psi_tilde.iter().skip(c).step_by(n).copied().collect()
    }
}

pub fn check_spectral_assumption(
    op: &LinearOperator,
    sys: &ReactionSystem,
    profile: &FrontProfile,
    opts: SpectralOptions,
) -> Result<SpectralData> {
    if !(opts.eta0_factor > 0.0 && opts.eta0_factor < 1.0) {
        return Err(invalid(format!("eta0_factor must lie in (0,1), got {}", opts.eta0_factor)));
    }
    let ends = end_state_spectrum(sys)?;
    let n = op.n;
    let g = op.grid;
    let h = g.h();
    let symmetric = op.matrix.max_asymmetry() <= 1e-12 * op.matrix.get(0, 0).abs().max(1.0);
    let (values, vectors) = if symmetric {
        symmetric_top(&op.matrix, opts.count)?
    } else {
        general_top(op, sys, profile, opts)?
    };
    let centre = 0.5 * (g.x_min + g.x_max);
    let half = 0.5 * (g.x_max - g.x_min);
    let xs = g.nodes();
    let participation: Vec<f64> = vectors
        .iter()
        .map(|w| {
            let (mut outer, mut total) = (0.0, 0.0);
            for (k, v) in w.iter().enumerate() {
                let x = xs[k / n + 1];
                let m2 = v * v;
                total += m2;
                if (x - centre).abs() > 0.5 * half {
                    outer += m2;
                }
            }
            outer / total
        })
        .collect();

    let (iz, zero) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, v)| (i, *v))
        .ok_or_else(|| Error::ResolutionInsufficient("no eigenvalues computed".into()))?;
    if zero.norm() >= opts.tol {
        return Err(Error::ResolutionInsufficient(format!(
            "eigenvalue nearest 0 is {zero}, above tolerance {:e}",
            opts.tol
        )));
    }
    for (k, v) in values.iter().enumerate() {
        if k == iz {
            continue;
        }
        if (v - zero).norm() < 10.0 * opts.tol || v.re >= -opts.tol {
            return Err(Error::AssumptionViolated(format!(
                "eigenvalue {v} violates simplicity/stability of the zero eigenvalue"
            )));
        }
    }
    let kinds: Vec<EigenKind> = (0..values.len())
        .map(|k| {
            if k == iz {
                EigenKind::Zero
            } else if participation[k] > 0.5 {
                EigenKind::Continuum
            } else {
                EigenKind::Discrete
            }
        })
        .collect();
    let edge = ends.essential_edge();
    let lambda1 = values
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| **k == EigenKind::Discrete)
        .map(|(v, _)| v.re)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let eta = lambda1.map_or(-edge, |l| (-l).min(-edge));
    if !(eta > 0.0) {
        return Err(Error::AssumptionViolated(format!("spectral gap eta = {eta} is not positive")));
    }
    let eta0 = opts.eta0_factor * (eta / 4.0).min(ends.eta_prime);

    // Zero modes.
    let uprime = &profile.u_bar_prime;
    let zero_vec = &vectors[iz];
    let interior_uprime = &uprime[n..uprime.len() - n];
    let dot: f64 = zero_vec.iter().zip(interior_uprime).map(|(a, b)| a * b).sum();
    let nz: f64 = zero_vec.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nu: f64 = interior_uprime.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cosine = (dot / (nz * nu)).abs();
    let psi_interior = if symmetric {
        zero_vec.clone()
    } else {
        let at = op.matrix.transpose();
        let start: Vec<f64> = zero_vec.clone();
        inverse_iteration(&at, zero.re, &start, 4)?
    };
    let mut psi = vec![0.0; uprime.len()];
    psi[n..uprime.len() - n].copy_from_slice(&psi_interior);
    let pairing = inner_nodes(&psi, uprime, n, h);
    let scale = nrm(&psi) * nrm(uprime) * h;
    if pairing.abs() < 1e-8 * scale {
        return Err(Error::NormalizationDegenerate(format!("<psi, u'> = {pairing:e}")));
    }
    for v in psi.iter_mut() {
        *v /= pairing;
    }
    // Bi-orthogonality against the other computed eigenvectors (unit L²).
    let mut bio: f64 = 0.0;
    for (k, w) in vectors.iter().enumerate() {
        if k == iz {
            continue;
        }
        let mut full = vec![0.0; uprime.len()];
        full[n..uprime.len() - n].copy_from_slice(w);
        let l2 = inner_nodes(&full, &full, n, h).sqrt();
        bio = bio.max((inner_nodes(&psi, &full, n, h) / l2).abs());
    }
    Ok(SpectralData {
        eigenvalues: values,
        kinds,
        participation,
        zero_eig: zero,
        zero_mode_cosine: cosine,
        phi: uprime.clone(),
        psi_tilde: psi,
        lambda1,
        essential_edge: edge,
        eta,
        eta_prime: ends.eta_prime,
        eta0,
        biorthogonality: bio,
        eigenvectors: vectors,
    })
}

fn nrm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Trapezoid pairing Σ_c ∫ a_c b_c over node-major samples.
pub(crate) fn inner_nodes(a: &[f64], b: &[f64], n: usize, h: f64) -> f64 {
    if n == 1 {
        return inner(a, b, h);
    }
    (0..n)
        .map(|c| {
            let ac: Vec<f64> = a.iter().skip(c).step_by(n).copied().collect();
            let bc: Vec<f64> = b.iter().skip(c).step_by(n).copied().collect();
            inner(&ac, &bc, h)
        })
        .sum()
}

fn start_vector(m: usize) -> Vec<f64> {
    // Deterministic, generic start vector (no symmetry).
    (0..m).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7123).sin() + 0.25 * ((i as f64) * 0.1234).cos()).collect()
}

fn symmetric_top(a: &BandMatrix<f64>, count: usize) -> Result<(Vec<Complex64>, Vec<Vec<f64>>)> {
    let vals = top_eigenvalues_symmetric(a, count, 1e-15);
    let start = start_vector(a.dim());
    let mut vecs = Vec::with_capacity(vals.len());
    for &v in &vals {
        let mut w = inverse_iteration(a, v, &start, 3)?;
        // Sign convention: largest-magnitude entry positive.
        let k = w.iter().enumerate().max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap()).unwrap().0;
        if w[k] < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        vecs.push(w);
    }
    Ok((vals.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), vecs))
}

/// Non-symmetric operators: dense eigenvalues of a (possibly coarsened)
/// operator, refined on the full operator by complex inverse iteration with
/// Rayleigh-quotient updates.
fn general_top(
    op: &LinearOperator,
    sys: &ReactionSystem,
    profile: &FrontProfile,
    opts: SpectralOptions,
) -> Result<(Vec<Complex64>, Vec<Vec<f64>>)> {
    let n = op.n;
    let coarse_op;
    let source = if op.dim() <= opts.dense_limit {
        op
    } else {
        let cells = (opts.dense_limit / n).max(8);
        let g = op.grid;
        let cg = Grid1D::new(g.x_min, g.x_max, cells + 1)?;
        let mut samples = Vec::with_capacity(cg.n * n);
        for x in cg.nodes() {
            for c in 0..n {
                samples.push(profile.eval(c, x).0);
            }
        }
        let cp = FrontProfile::from_samples(sys, cg, samples, profile.anchor)?;
        coarse_op = assemble_linearization(sys, &cp, op.order);
        &coarse_op
    };
    let d = source.dim();
    let dense = DMatrix::from_fn(d, d, |i, j| source.matrix.get(i, j));
    let mut ev: Vec<Complex64> = dense.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    ev.truncate(opts.count);
    let full = op.matrix.shifted(Complex64::new(0.0, 0.0), |v| Complex64::new(v, 0.0));
    let start: Vec<Complex64> = start_vector(op.dim()).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let mut vals = Vec::new();
    let mut vecs: Vec<Vec<f64>> = Vec::new();
    for mut lam in ev {
        let mut w = start.clone();
        for _ in 0..4 {
            w = inverse_iteration(&full, lam, &w, 2)?;
            let aw = full.matvec(&w);
            let num: Complex64 = w.iter().zip(&aw).map(|(a, b)| a.conj() * b).sum();
            let den: f64 = w.iter().map(|a| a.norm_sqr()).sum();
            lam = num / den;
        }
        // Real representative of the eigenvector (phase-aligned).
        let k = w.iter().enumerate().max_by(|x, y| x.1.norm().partial_cmp(&y.1.norm()).unwrap()).unwrap().0;
        let phase = w[k].conj() / w[k].norm();
        vals.push(lam);
        vecs.push(w.iter().map(|z| (z * phase).re).collect());
    }
    // Keep the ordering after refinement.
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].re.partial_cmp(&vals[a].re).unwrap());
    Ok((order.iter().map(|&i| vals[i]).collect(), order.iter().map(|&i| vecs[i].clone()).collect()))
}

/// Zero-eigenfunction alignment diagnostic: ‖L ū′‖∞ on the interior.
pub fn zero_mode_residual(op: &LinearOperator, profile: &FrontProfile) -> f64 {
    op.apply_full(&profile.u_bar_prime)
        .iter()
        .skip(op.n)
        .take(op.dim())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

// ---------------------------------------------------------------------------
// far-field exponents

/// Spatial exponents of W′ = A(±∞, λ)W at one end: μ² = λ − σ_j.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndModes {
    /// Re μ < 0 (decaying as x → +∞).
    pub mu_neg: Vec<Complex64>,
    /// Re μ > 0; `mu_pos[j] = -mu_neg[j]`.
    pub mu_pos: Vec<Complex64>,
    /// Eigenvectors (r_j, μ r_j) of the first-order system for `mu_neg`/`mu_pos`.
    pub v_neg: Vec<Vec<Complex64>>,
    pub v_pos: Vec<Vec<Complex64>>,
    /// Small-λ expansion μ_neg ≈ −γ − aλ + bλ².
    pub gamma: Vec<Complex64>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeData {
    pub lambda: Complex64,
    pub minus: EndModes,
    pub plus: EndModes,
}

pub fn decay_exponents(spec: &EndStateSpectrum, lambda: Complex64) -> Result<ModeData> {
    let side = |sigma: &[Complex64], vecs: &[Vec<Complex64>]| -> Result<EndModes> {
        let mut m = EndModes {
            mu_neg: vec![],
            mu_pos: vec![],
            v_neg: vec![],
            v_pos: vec![],
            gamma: vec![],
            a: vec![],
            b: vec![],
        };
        for (s, r) in sigma.iter().zip(vecs) {
            let rad = lambda - s;
            if rad.norm() <= 1e-14 * (1.0 + s.norm()) {
                return Err(Error::BranchDegenerate(lambda));
            }
            let root = rad.sqrt();
            let mu_pos = if root.re >= 0.0 { root } else { -root };
            let mu_neg = -mu_pos;
            let g = (-s).sqrt();
            m.v_neg.push(r.iter().copied().chain(r.iter().map(|v| v * mu_neg)).collect());
            m.v_pos.push(r.iter().copied().chain(r.iter().map(|v| v * mu_pos)).collect());
            m.mu_neg.push(mu_neg);
            m.mu_pos.push(mu_pos);
            m.a.push(1.0 / (2.0 * g));
            m.b.push(1.0 / (8.0 * g * g * g));
            m.gamma.push(g);
        }
        Ok(m)
    };
    Ok(ModeData {
        lambda,
        minus: side(&spec.sigma_minus, &spec.vectors_minus)?,
        plus: side(&spec.sigma_plus, &spec.vectors_plus)?,
    })
}

/// Single-branch exponent pair ±√(λ − σ) (principal branch, + has Re ≥ 0).
pub fn branch_exponents(sigma: Complex64, lambda: Complex64) -> Result<(Complex64, Complex64)> {
    let rad = lambda - sigma;
    if rad.norm() <= 1e-14 * (1.0 + sigma.norm()) {
        return Err(Error::BranchDegenerate(lambda));
    }
    let r = rad.sqrt();
    let p = if r.re >= 0.0 { r } else { -r };
    Ok((p, -p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolynomialField, Term};
    use crate::profile::{solve_profile, ProfileOptions};

    fn bistable() -> (ReactionSystem, FrontProfile) {
        let sys = ReactionSystem::bistable();
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
        (sys, p)
    }

    fn flat_profile(g: Grid1D) -> FrontProfile {
        FrontProfile {
            grid: g,
            n: 1,
            u_minus: vec![0.0],
            u_plus: vec![0.0],
            anchor: 0.0,
            u_bar: vec![0.0; g.n],
            u_bar_prime: vec![0.0; g.n],
            tail_rate_minus: 1.0,
            tail_rate_plus: 1.0,
            residual_sup: 0.0,
        }
    }

    #[test]
    fn constant_coefficient_matrix() {
        let sys = ReactionSystem::linear(1.0);
        let g = Grid1D::symmetric(5.0, 51).unwrap();
        let p = flat_profile(g);
        let op = assemble_linearization(&sys, &p, StencilOrder::Second);
        let lap = crate::numerics::second_difference_operator(&g);
        for i in 0..49 {
            for j in 0..49 {
                let expect = lap.get(i, j) - if i == j { 1.0 } else { 0.0 };
                assert!((op.matrix.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_field_row_sums() {
        let (sys, p) = bistable();
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        for i in [10usize, 2985] {
            let s: f64 = op.matrix.row_range(i).map(|j| op.matrix.get(i, j)).sum();
            assert!((s + 0.5).abs() < 1e-6, "row {i}: {s}");
        }
        assert!(zero_mode_residual(&op, &p) < 1e-4);
    }

    #[test]
    fn bistable_spectrum() {
        let (sys, p) = bistable();
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
        assert!(sd.zero_eig.norm() < 1e-6, "{}", sd.zero_eig);
        assert!(sd.zero_mode_cosine > 0.999);
        assert!((sd.lambda1.unwrap() + 0.375).abs() < 1e-6);
        assert!((sd.eta - 0.375).abs() < 1e-6);
        assert_eq!(sd.essential_edge, -0.5);
        assert!((sd.eta0 - 0.9 * 0.375 / 4.0).abs() < 1e-6);
        assert!(sd.biorthogonality < 1e-6, "{}", sd.biorthogonality);
        // Self-adjoint: ψ̃ = ū′/‖ū′‖².
        let h = p.grid.h();
        let norm2 = inner(&p.u_bar_prime, &p.u_bar_prime, h);
        for (a, b) in sd.psi_tilde.iter().zip(&p.u_bar_prime) {
            assert!((a - b / norm2).abs() < 1e-8);
        }
        assert!((inner(&sd.psi_tilde, &p.u_bar_prime, h) - 1.0).abs() < 1e-10);
        assert!(sd.eigenvalues.iter().all(|v| v.im.abs() < 1e-10));
        // Exact ‖ū′‖² = 1/(6√2).
        assert!((norm2 - 1.0 / (6.0 * std::f64::consts::SQRT_2)).abs() < 1e-8);
    }

    #[test]
    fn psi_tail_rate() {
        let (sys, p) = bistable();
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        let sd = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default()).unwrap();
        let xs = p.grid.nodes();
        let (mut px, mut py) = (vec![], vec![]);
        for (i, &x) in xs.iter().enumerate() {
            if (10.0..20.0).contains(&x) {
                px.push(x);
                py.push(sd.psi_tilde[i].abs().ln());
            }
        }
        let fit = crate::numerics::linear_fit(&px, &py).unwrap();
        assert!(-fit.slope >= 0.9 * sd.eta_prime, "rate {}", -fit.slope);
    }

    #[test]
    fn zero_eigenvalue_converges_with_refinement() {
        let sys = ReactionSystem::bistable();
        let z = |n: usize| {
            let g = Grid1D::symmetric(30.0, n).unwrap();
            let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
            let op = assemble_linearization(&sys, &p, StencilOrder::Second);
            let opts = SpectralOptions { tol: 1e-3, count: 4, ..Default::default() };
            check_spectral_assumption(&op, &sys, &p, opts).unwrap().zero_eig.norm()
        };
        let (a, b) = (z(751), z(1501));
        assert!(a / b > 3.0, "{a:e} {b:e}");
    }

    #[test]
    fn eta0_factor_validated() {
        let (sys, p) = bistable();
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        let opts = SpectralOptions { eta0_factor: 1.5, ..Default::default() };
        assert!(check_spectral_assumption(&op, &sys, &p, opts).is_err());
    }

    #[test]
    fn unstable_operator_rejected() {
        let sys = ReactionSystem::linear(-1.0);
        let g = Grid1D::symmetric(10.0, 201).unwrap();
        let p = flat_profile(g);
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        let r = check_spectral_assumption(&op, &sys, &p, SpectralOptions::default());
        assert!(matches!(r, Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn two_component_nonsymmetric_path() {
        // f = (bistable(u1) + 0.1 u2, −u2): triangular coupling, not symmetric.
        let field = PolynomialField::new(vec![
            vec![
                Term { coef: -1.0, powers: vec![3, 0] },
                Term { coef: 1.5, powers: vec![2, 0] },
                Term { coef: -0.5, powers: vec![1, 0] },
                Term { coef: 0.1, powers: vec![0, 1] },
            ],
            vec![Term { coef: -1.0, powers: vec![0, 1] }],
        ])
        .unwrap();
        let sys = ReactionSystem::polynomial("coupled", field, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let g = Grid1D::symmetric(32.0, 1601).unwrap();
        let p = solve_profile(&sys, g, ProfileOptions::default()).unwrap();
        let op = assemble_linearization(&sys, &p, StencilOrder::Fourth);
        let opts = SpectralOptions { count: 12, dense_limit: 900, ..Default::default() };
        let sd = check_spectral_assumption(&op, &sys, &p, opts).unwrap();
        assert!(sd.zero_eig.norm() < 1e-6, "{}", sd.zero_eig);
        assert!((sd.lambda1.unwrap() + 0.375).abs() < 1e-4, "{:?}", sd.lambda1);
        let h = g.h();
        assert!((inner_nodes(&sd.psi_tilde, &p.u_bar_prime, 2, h) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exponent_examples() {
        let (p, m) = branch_exponents(Complex64::new(-0.5, 0.0), Complex64::new(0.0, 0.0)).unwrap();
        assert!((p.re - 0.5f64.sqrt()).abs() < 1e-15 && (m.re + 0.5f64.sqrt()).abs() < 1e-15);
        let lam = Complex64::new(-0.5, 1.0);
        let sigma = Complex64::new(-1.0, 0.0);
        let (p, _) = branch_exponents(sigma, lam).unwrap();
        assert!((p - Complex64::new(0.899_453_719_973_934, 0.555_892_970_251_421)).norm() < 1e-12);
        assert!((p * p - (lam - sigma)).norm() < 1e-14);
        assert!(matches!(branch_exponents(sigma, sigma), Err(Error::BranchDegenerate(_))));
    }

    #[test]
    fn exponent_pairing_and_expansion() {
        let spec = end_state_spectrum(&ReactionSystem::bistable()).unwrap();
        let md = decay_exponents(&spec, Complex64::new(-0.1, 0.3)).unwrap();
        for side in [&md.minus, &md.plus] {
            for j in 0..side.mu_neg.len() {
                assert_eq!(side.mu_neg[j], -side.mu_pos[j]);
                assert!(side.mu_neg[j].re < 0.0);
                let v = &side.v_neg[j];
                assert!((v[1] - v[0] * side.mu_neg[j]).norm() < 1e-15);
            }
        }
        let errs: Vec<f64> = (2..=4)
            .map(|k| {
                let lam = Complex64::new(10f64.powi(-k), 0.0);
                let md = decay_exponents(&spec, lam).unwrap();
                let e = &md.plus;
                (e.mu_neg[0] - (-e.gamma[0] - e.a[0] * lam)).norm()
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((r / 100.0 - 1.0).abs() < 0.05, "ratio {r}");
        }
    }
}

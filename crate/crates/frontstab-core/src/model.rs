//! Reaction terms for `u_t = u_xx + f(u)`, their Jacobians, end states and
//! end-state spectra.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance for "strictly negative real part".
pub const EPS_STAB: f64 = 1e-8;
/// Tolerance for |f(u±)| at a rest point.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// One monomial `coef · Π u_k^{powers[k]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Polynomial vector field, one list of terms per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialField {
    pub components: Vec<Vec<Term>>,
}

impl PolynomialField {
    pub fn new(components: Vec<Vec<Term>>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(invalid("polynomial system needs at least one component"));
        }
        for (c, terms) in components.iter().enumerate() {
            for t in terms {
                if t.powers.len() != n {
                    return Err(invalid(format!(
                        "component {c}: term has {} exponents, expected {n}",
                        t.powers.len()
                    )));
                }
                if !t.coef.is_finite() {
                    return Err(invalid(format!("component {c}: non-finite coefficient")));
                }
            }
        }
        Ok(Self { components })
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (c, terms) in self.components.iter().enumerate() {
            out[c] = terms
                .iter()
                .map(|t| t.coef * t.powers.iter().zip(u).map(|(&p, &x)| x.powi(p as i32)).product::<f64>())
                .sum();
        }
    }

    fn jacobian_into(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for (c, terms) in self.components.iter().enumerate() {
            for k in 0..n {
                out[c * n + k] = terms
                    .iter()
                    .filter(|t| t.powers[k] > 0)
                    .map(|t| {
                        let mut v = t.coef * t.powers[k] as f64;
                        for (j, (&p, &x)) in t.powers.iter().zip(u).enumerate() {
                            let e = if j == k { p - 1 } else { p };
                            v *= x.powi(e as i32);
                        }
                        v
                    })
                    .sum();
            }
        }
    }
}

type CustomField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Which nonlinearity a [`ReactionSystem`] carries.
#[derive(Clone)]
pub enum ReactionKind {
    /// f(u) = u(1−u)(u−a).
    Bistable { a: f64 },
    /// f(u) = −c u.
    Linear { c: f64 },
    Polynomial(PolynomialField),
    /// Only f is known; the Jacobian falls back to centred differences.
    Custom(CustomField),
}

impl fmt::Debug for ReactionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bistable { a } => write!(f, "Bistable {{ a: {a} }}"),
            Self::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            Self::Polynomial(p) => write!(f, "Polynomial({} components)", p.components.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReactionSystem {
    pub name: String,
    pub n: usize,
    pub kind: ReactionKind,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
}

impl ReactionSystem {
    /// Cubic bistable f(u)=u(1−u)(u−1/2) with u− = 1, u+ = 0.
    pub fn bistable() -> Self {
        Self::bistable_with(0.5)
    }

    pub fn bistable_with(a: f64) -> Self {
        Self { name: "bistable".into(), n: 1, kind: ReactionKind::Bistable { a }, u_minus: vec![1.0], u_plus: vec![0.0] }
    }

    /// f(u) = −c u; both end states are 0 (no front).
    pub fn linear(c: f64) -> Self {
        Self { name: "linear".into(), n: 1, kind: ReactionKind::Linear { c }, u_minus: vec![0.0], u_plus: vec![0.0] }
    }

    pub fn polynomial(name: &str, field: PolynomialField, u_minus: Vec<f64>, u_plus: Vec<f64>) -> Result<Self> {
        let n = field.components.len();
        if u_minus.len() != n || u_plus.len() != n {
            return Err(invalid(format!("end states must have dimension {n}")));
        }
        Ok(Self { name: name.into(), n, kind: ReactionKind::Polynomial(field), u_minus, u_plus })
    }

    pub fn custom(
        name: &str,
        n: usize,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        u_minus: Vec<f64>,
        u_plus: Vec<f64>,
    ) -> Self {
        Self { name: name.into(), n, kind: ReactionKind::Custom(Arc::new(f)), u_minus, u_plus }
    }

    /// Built-in lookup by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bistable" => Ok(Self::bistable()),
            "linear" => Ok(Self::linear(1.0)),
            _ => Err(invalid(format!("unknown built-in system '{name}'"))),
        }
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        !matches!(self.kind, ReactionKind::Custom(_))
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n {
            return Err(invalid(format!("state has dimension {}, expected {}", u.len(), self.n)));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite state"));
        }
        Ok(())
    }

    /// f(u), unchecked; `out.len() == n`.
    #[inline]
    pub fn f_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            ReactionKind::Bistable { a } => out[0] = bistable_f(u[0], *a),
            ReactionKind::Linear { c } => out[0] = -c * u[0],
            ReactionKind::Polynomial(p) => p.eval_into(u, out),
            ReactionKind::Custom(f) => f(u, out),
        }
    }

    /// Row-major Df(u), unchecked; `out.len() == n*n`.
    #[inline]
    pub fn df_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            ReactionKind::Bistable { a } => out[0] = bistable_df(u[0], *a),
            ReactionKind::Linear { c } => out[0] = -c,
            ReactionKind::Polynomial(p) => p.jacobian_into(u, out),
            ReactionKind::Custom(_) => self.jacobian_fd_into(u, out),
        }
    }

    /// Scalar fast path (n = 1).
    #[inline]
    pub fn f1(&self, u: f64) -> f64 {
        match &self.kind {
            ReactionKind::Bistable { a } => bistable_f(u, *a),
            ReactionKind::Linear { c } => -c * u,
            _ => {
                let mut o = [0.0];
                self.f_into(&[u], &mut o);
                o[0]
            }
        }
    }

    #[inline]
    pub fn df1(&self, u: f64) -> f64 {
        match &self.kind {
            ReactionKind::Bistable { a } => bistable_df(u, *a),
            ReactionKind::Linear { c } => -c,
            _ => {
                let mut o = [0.0];
                self.df_into(&[u], &mut o);
                o[0]
            }
        }
    }

    /// Centred finite-difference Jacobian with step ε^{1/3}·max(1,|u_k|).
    pub fn jacobian_fd_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut up = u.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..n {
            let hj = f64::EPSILON.cbrt() * u[k].abs().max(1.0);
            up[k] = u[k] + hj;
            self.f_into(&up, &mut fp);
            up[k] = u[k] - hj;
            self.f_into(&up, &mut fm);
            up[k] = u[k];
            for c in 0..n {
                out[c * n + k] = (fp[c] - fm[c]) / (2.0 * hj);
            }
        }
    }

    pub fn jacobian_fd(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let mut out = vec![0.0; self.n * self.n];
        self.jacobian_fd_into(u, &mut out);
        Ok(DMatrix::from_row_slice(self.n, self.n, &out))
    }
}

#[inline]
fn bistable_f(u: f64, a: f64) -> f64 {
    u * (1.0 - u) * (u - a)
}

#[inline]
fn bistable_df(u: f64, a: f64) -> f64 {
    // d/du [-(u³) + (1+a)u² − a u]
    -3.0 * u * u + 2.0 * (1.0 + a) * u - a
}

pub fn eval_reaction(sys: &ReactionSystem, u: &[f64]) -> Result<Vec<f64>> {
    sys.check(u)?;
    let mut out = vec![0.0; sys.n];
    sys.f_into(u, &mut out);
    Ok(out)
}

pub fn eval_jacobian(sys: &ReactionSystem, u: &[f64]) -> Result<DMatrix<f64>> {
    sys.check(u)?;
    let mut out = vec![0.0; sys.n * sys.n];
    sys.df_into(u, &mut out);
    Ok(DMatrix::from_row_slice(sys.n, sys.n, &out))
}

/// Spectra of Df(u±) and the spatial rates at λ = 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndStateSpectrum {
    pub sigma_minus: Vec<Complex64>,
    pub sigma_plus: Vec<Complex64>,
    /// Unit right eigenvectors of Df(u−), paired with `sigma_minus`.
    pub vectors_minus: Vec<Vec<Complex64>>,
    pub vectors_plus: Vec<Vec<Complex64>>,
    pub gamma_minus: Vec<Complex64>,
    pub gamma_plus: Vec<Complex64>,
    pub eta_prime: f64,
}

impl EndStateSpectrum {
    /// Rightmost point of the essential spectrum at λ-level: max_j Re σ_j±.
    pub fn essential_edge(&self) -> f64 {
        self.sigma_minus.iter().chain(&self.sigma_plus).map(|s| s.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn end_state_spectrum(sys: &ReactionSystem) -> Result<EndStateSpectrum> {
    let side = |u: &[f64], label: &str| -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
        let fu = eval_reaction(sys, u)?;
        let res = fu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res > EQUILIBRIUM_TOL {
            return Err(Error::AssumptionViolated(format!("u{label} is not a rest point: |f| = {res:e}")));
        }
        let j = eval_jacobian(sys, u)?;
        let (vals, vecs) = eigen_small(&j);
        for s in &vals {
            if s.re >= -EPS_STAB {
                return Err(Error::AssumptionViolated(format!(
                    "end state u{label} not strictly stable: eigenvalue {s} of Df"
                )));
            }
        }
        Ok((vals, vecs))
    };
    let (sigma_minus, vectors_minus) = side(&sys.u_minus, "-")?;
    let (sigma_plus, vectors_plus) = side(&sys.u_plus, "+")?;
    let gamma = |s: &Vec<Complex64>| s.iter().map(|v| (-v).sqrt()).collect::<Vec<_>>();
    let gamma_minus = gamma(&sigma_minus);
    let gamma_plus = gamma(&sigma_plus);
    let eta_prime = gamma_minus.iter().chain(&gamma_plus).map(|g| g.re).fold(f64::INFINITY, f64::min);
    Ok(EndStateSpectrum { sigma_minus, sigma_plus, vectors_minus, vectors_plus, gamma_minus, gamma_plus, eta_prime })
}

/// Eigenvalues (sorted by real part, descending) and unit right eigenvectors
/// of a small real matrix.
pub(crate) fn eigen_small(a: &DMatrix<f64>) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
    let n = a.nrows();
    if n == 1 {
        return (vec![Complex64::new(a[(0, 0)], 0.0)], vec![vec![Complex64::new(1.0, 0.0)]]);
    }
    let mut vals: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap().then(y.im.partial_cmp(&x.im).unwrap()));
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let vecs = vals
        .iter()
        .map(|&s| {
            let m = &ac - DMatrix::<Complex64>::identity(n, n) * s;
            let svd = m.svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            // Smallest singular value is last in nalgebra's ordering only after
            // sorting; pick it explicitly.
            let (k, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .unwrap();
            let row = vt.row(k);
            let v: DVector<Complex64> = row.transpose().map(|z| z.conj());
            let nrm = v.norm();
            v.iter().map(|z| z / nrm).collect()
        })
        .collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bistable_values() {
        let s = ReactionSystem::bistable();
        for u in [0.0, 1.0, 0.5] {
            assert_eq!(eval_reaction(&s, &[u]).unwrap()[0], 0.0);
        }
        assert_eq!(eval_jacobian(&s, &[0.0]).unwrap()[(0, 0)], -0.5);
        assert_eq!(eval_jacobian(&s, &[1.0]).unwrap()[(0, 0)], -0.5);
        assert_eq!(eval_jacobian(&s, &[0.5]).unwrap()[(0, 0)], 0.25);
        assert!(eval_reaction(&s, &[f64::NAN]).is_err());
        assert!(eval_jacobian(&s, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn end_state_spectra() {
        let sp = end_state_spectrum(&ReactionSystem::bistable()).unwrap();
        assert_eq!(sp.sigma_plus, vec![Complex64::new(-0.5, 0.0)]);
        assert!((sp.eta_prime - 0.5f64.sqrt()).abs() < 1e-15);
        let sp = end_state_spectrum(&ReactionSystem::linear(1.0)).unwrap();
        assert_eq!(sp.sigma_minus[0].re, -1.0);
        assert_eq!(sp.eta_prime, 1.0);
        let bad = ReactionSystem::linear(-1.0);
        assert!(matches!(end_state_spectrum(&bad), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn polynomial_two_component() {
        // f1 = -u1 + u2², f2 = -2 u2 + u1 u2
        let field = PolynomialField::new(vec![
            vec![Term { coef: -1.0, powers: vec![1, 0] }, Term { coef: 1.0, powers: vec![0, 2] }],
            vec![Term { coef: -2.0, powers: vec![0, 1] }, Term { coef: 1.0, powers: vec![1, 1] }],
        ])
        .unwrap();
        let sys = ReactionSystem::polynomial("p", field, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let u = [0.3, -0.7];
        let f = eval_reaction(&sys, &u).unwrap();
        assert!((f[0] - (-0.3 + 0.49)).abs() < 1e-15);
        assert!((f[1] - (1.4 - 0.21)).abs() < 1e-15);
        let j = eval_jacobian(&sys, &u).unwrap();
        let expected = [[-1.0, -1.4], [-0.7, -2.0 + 0.3]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - expected[r][c]).abs() < 1e-15);
            }
        }
        let sp = end_state_spectrum(&sys).unwrap();
        assert_eq!(sp.sigma_plus.len(), 2);
        assert!((sp.eta_prime - 1.0).abs() < 1e-12);
        // Eigenvectors really are eigenvectors.
        let jd = eval_jacobian(&sys, &[0.0, 0.0]).unwrap().map(|v| Complex64::new(v, 0.0));
        for (s, v) in sp.sigma_plus.iter().zip(&sp.vectors_plus) {
            let vv = DVector::from_vec(v.clone());
            assert!((&jd * &vv - vv * *s).norm() < 1e-12);
        }
    }

    #[test]
    fn gamma_squares_back() {
        let sp = end_state_spectrum(&ReactionSystem::bistable()).unwrap();
        for (g, s) in sp.gamma_plus.iter().zip(&sp.sigma_plus) {
            assert!((g * g + s).norm() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn fd_jacobian_matches_analytic(u in 0.0f64..1.0) {
            let s = ReactionSystem::bistable();
            let a = eval_jacobian(&s, &[u]).unwrap()[(0, 0)];
            let f = s.jacobian_fd(&[u]).unwrap()[(0, 0)];
            prop_assert!((a - f).abs() <= 1e-6 * a.abs().max(1e-3));
        }

        #[test]
        fn custom_system_uses_fd(u in -2.0f64..2.0) {
            let c = ReactionSystem::custom("cubic", 1, |u, o| o[0] = u[0] * (1.0 - u[0]) * (u[0] - 0.5), vec![1.0], vec![0.0]);
            let b = ReactionSystem::bistable();
            let jc = eval_jacobian(&c, &[u]).unwrap()[(0, 0)];
            let jb = eval_jacobian(&b, &[u]).unwrap()[(0, 0)];
            prop_assert!((jc - jb).abs() < 1e-8 * (1.0 + jb.abs()));
        }
    }
}

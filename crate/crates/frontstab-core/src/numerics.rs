//! Grids, difference operators, discrete norms, quadrature and the special
//! functions used by the kernel templates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::BandMatrix;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Uniform grid on `[x_min, x_max]` with `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(invalid(format!("bad grid interval [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Symmetric grid `[-x_max, x_max]`.
    pub fn symmetric(x_max: f64, n: usize) -> Result<Self> {
        Self::new(-x_max, x_max, n)
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        // Evaluate from the nearer end so symmetric grids are exactly symmetric.
        let h = self.h();
        if 2 * i < self.n {
            self.x_min + i as f64 * h
        } else {
            self.x_max - (self.n - 1 - i) as f64 * h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest to `x` (clamped).
    pub fn nearest(&self, x: f64) -> usize {
        let r = ((x - self.x_min) / self.h()).round();
        r.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Cell index `i` and fraction `s ∈ [0,1]` with `x = x_i + s h`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.h();
        let r = ((x - self.x_min) / h).clamp(0.0, (self.n - 1) as f64);
        let i = (r.floor() as usize).min(self.n - 2);
        (i, r - i as f64)
    }

    /// Every `stride`-th node (the last node is kept when it lands on the stride).
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || (self.n - 1) % stride != 0 {
            return Err(invalid(format!("stride {stride} does not divide {} cells", self.n - 1)));
        }
        Self::new(self.x_min, self.x_max, (self.n - 1) / stride + 1)
    }

    /// Same interval, cell size halved.
    pub fn refine(&self) -> Self {
        Self { n: 2 * self.n - 1, ..*self }
    }
}

// ---------------------------------------------------------------------------
// error function family

/// erf(x) = 2/√π e^{-x²} Σ 2ⁿx^{2n+1}/(2n+1)!!  (all terms positive) for |x| ≤ 3,
/// continued fraction for erfc beyond.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax > 3.0 {
        let v = 1.0 - erfc_cf(ax);
        return v.copysign(x);
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / SQRT_PI * (-x2).exp() * sum
}

/// Complementary error function, accurate in relative terms for large x.
pub fn erfc(x: f64) -> f64 {
    if x > 3.0 {
        erfc_cf(x)
    } else if x < -3.0 {
        2.0 - erfc_cf(-x)
    } else {
        1.0 - erf(x)
    }
}

// erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz.
fn erfc_cf(x: f64) -> f64 {
    if x > 27.3 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (SQRT_PI * f)
}

/// errfn(x) = (1/√π)∫_{-∞}^x e^{-z²} dz = (1+erf x)/2.
pub fn errfn(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x)
    } else {
        1.0 - 0.5 * erfc(x)
    }
}

/// Checks erfc(x) ≤ e^{-x²} + 1e-12 with erfc computed by adaptive quadrature
/// of its defining integral (independent of [`erfc`]).
pub fn erfc_upper_check(x: f64) -> Result<bool> {
    if !(x >= 0.0) {
        return Err(invalid(format!("erfc_upper_check needs x >= 0, got {x}")));
    }
    Ok(erfc_quadrature(x) <= (-x * x).exp() + 1e-12)
}

/// erfc by adaptive Gauss–Kronrod on the substituted integral
/// 2/√π ∫_x^∞ e^{-z²}dz, truncated where the integrand is below 1e-300.
pub fn erfc_quadrature(x: f64) -> f64 {
    let upper = x.max(0.0) + 27.0;
    let lower = x;
    2.0 / SQRT_PI * gauss_kronrod_adaptive(|z| (-z * z).exp(), lower, upper, 1e-14)
}

// ---------------------------------------------------------------------------
// quadrature

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (estimate, |K15 − G7|).
pub fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WEIGHTS[7];
    let mut g = fc * G7_WEIGHTS[3];
    for i in 0..7 {
        let dx = hw * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * hw, ((k - g) * hw).abs())
}

/// Globally adaptive Gauss–Kronrod (bisect the panel with the largest error).
pub fn gauss_kronrod_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut panels = vec![(a, b, gauss_kronrod_15(&f, a, b))];
    for _ in 0..2000 {
        let total_err: f64 = panels.iter().map(|p| p.2 .1).sum();
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        if total_err <= tol * total.abs().max(1e-300) || total_err < 1e-300 {
            break;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.partial_cmp(&y.1 .2 .1).unwrap())
            .unwrap();
        let (pa, pb, _) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        panels.push((pa, m, gauss_kronrod_15(&f, pa, m)));
        panels.push((m, pb, gauss_kronrod_15(&f, m, pb)));
    }
    // Sum smallest-first for a stable total.
    let mut vals: Vec<f64> = panels.iter().map(|p| p.2 .0).collect();
    vals.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
    vals.iter().sum()
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton on Pₙ).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite trapezoid weights on a uniform grid.
pub fn trapezoid_weights(grid: &Grid1D) -> Vec<f64> {
    let h = grid.h();
    let mut w = vec![h; grid.n];
    w[0] = 0.5 * h;
    w[grid.n - 1] = 0.5 * h;
    w
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Trapezoid inner product ∫ a b on a uniform grid.
pub fn inner(a: &[f64], b: &[f64], h: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    h * (s - 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
}

/// Trapezoid-weighted ℓᵖ norm; `p = f64::INFINITY` gives the max norm.
pub fn discrete_lp_norm(values: &[f64], grid: &Grid1D, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    if values.len() != grid.n {
        return Err(invalid("values do not match grid"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite sample"));
    }
    Ok(lp_norm_unchecked(values, grid.h(), p))
}

pub(crate) fn lp_norm_unchecked(values: &[f64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let n = values.len();
    let pw = |v: f64| v.abs().powf(p);
    let s: f64 = values.iter().map(|&v| pw(v)).sum::<f64>() - 0.5 * (pw(values[0]) + pw(values[n - 1]));
    (h * s).powf(1.0 / p)
}

// ---------------------------------------------------------------------------
// Gaussian kernels

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelSpec {
    pub m: f64,
}

impl GaussianKernelSpec {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid(format!("kernel width M must be positive, got {m}")));
        }
        Ok(Self { m })
    }
}

/// K_M(x,t) = t^{-1/2} e^{-x²/(Mt)}.
pub fn gaussian_kernel(spec: GaussianKernelSpec, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("gaussian kernel needs t > 0, got {t}")));
    }
    Ok((-x * x / (spec.m * t)).exp() / t.sqrt())
}

/// Heat kernel (4πt)^{-1/2} e^{-x²/(4t)}.
pub fn heat_kernel(x: f64, t: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

// ---------------------------------------------------------------------------
// difference operators

/// (1,−2,1)/h² on the interior nodes with homogeneous Dirichlet closure;
/// dimension `n − 2`.
pub fn second_difference_operator(grid: &Grid1D) -> BandMatrix<f64> {
    let m = grid.n - 2;
    let c = 1.0 / (grid.h() * grid.h());
    let mut a = BandMatrix::zeros(m, 1, 1);
    for i in 0..m {
        a.set(i, i, -2.0 * c);
        if i + 1 < m {
            a.set(i, i + 1, c);
            a.set(i + 1, i, c);
        }
    }
    a
}

/// Fourth-order (−1,16,−30,16,−1)/(12h²) on the interior nodes, homogeneous
/// Dirichlet closure via odd reflection (keeps the matrix symmetric).
pub fn second_difference_operator_order4(grid: &Grid1D) -> BandMatrix<f64> {
    let m = grid.n - 2;
    let c = 1.0 / (12.0 * grid.h() * grid.h());
    let mut a = BandMatrix::zeros(m, 2, 2);
    for i in 0..m {
        let edge = i == 0 || i + 1 == m;
        a.set(i, i, if edge { -29.0 * c } else { -30.0 * c });
        if i + 1 < m {
            a.set(i, i + 1, 16.0 * c);
            a.set(i + 1, i, 16.0 * c);
        }
        if i + 2 < m {
            a.set(i, i + 2, -c);
            a.set(i + 2, i, -c);
        }
    }
    a
}

/// First derivative of grid samples: fourth-order centred in the interior,
/// second-order near and at the ends.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least 5 samples");
    let v = values;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    d[1] = (v[2] - v[0]) / (2.0 * h);
    d[n - 2] = (v[n - 1] - v[n - 3]) / (2.0 * h);
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    d
}

/// Second derivative: fourth-order centred interior, second-order edges.
pub fn second_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least 5 samples");
    let v = values;
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2]) / (12.0 * h2);
    }
    d[1] = (v[0] - 2.0 * v[1] + v[2]) / h2;
    d[n - 2] = (v[n - 3] - 2.0 * v[n - 2] + v[n - 1]) / h2;
    d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    d
}

/// Cubic Hermite interpolation of (f, f′) samples; returns (value, slope).
/// Points outside the grid are clamped to the end values with zero slope.
pub fn hermite(grid: &Grid1D, f: &[f64], fp: &[f64], x: f64) -> (f64, f64) {
    if x <= grid.x_min {
        return (f[0], 0.0);
    }
    if x >= grid.x_max {
        return (f[grid.n - 1], 0.0);
    }
    let h = grid.h();
    let (i, s) = grid.locate(x);
    hermite_cell(f[i], f[i + 1], fp[i], fp[i + 1], h, s)
}

#[inline]
pub fn hermite_cell(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let v = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
    let dv = ((6.0 * s2 - 6.0 * s) * f0 + (3.0 * s2 - 4.0 * s + 1.0) * h * d0
        + (-6.0 * s2 + 6.0 * s) * f1
        + (3.0 * s2 - 2.0 * s) * h * d1)
        / h;
    (v, dv)
}

// ---------------------------------------------------------------------------
// regression

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least-squares line through (x, y).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept: my - slope * mx, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn errfn_values() {
        assert_eq!(errfn(0.0), 0.5);
        assert!((errfn(40.0) - 1.0).abs() < 1e-16);
        assert!(errfn(-40.0) < 1e-300);
        // Oracle: adaptive quadrature of (1/√π)∫_{-∞}^1 e^{-z²}dz.
        let q = 0.5 + gauss_kronrod_adaptive(|z| (-z * z).exp(), 0.0, 1.0, 1e-15) / SQRT_PI;
        assert!((errfn(1.0) - q).abs() < 1e-14);
        assert!((errfn(1.0) - 0.921_350_396_474_857_3).abs() < 1e-12);
    }

    #[test]
    fn erf_matches_quadrature_across_regimes() {
        for &x in &[0.01, 0.3, 1.0, 2.2, 2.99, 3.01, 4.5, 6.0, 9.0] {
            let q = erfc_quadrature(x);
            let rel = (erfc(x) - q).abs() / q;
            assert!(rel < 1e-10, "x={x}: erfc={} quad={q}", erfc(x));
        }
    }

    #[test]
    fn erfc_upper_bound_holds() {
        assert!(erfc_upper_check(0.0).unwrap());
        assert!(erfc_upper_check(1.0).unwrap());
        assert!(erfc_upper_check(3.0).unwrap());
        assert!((erfc_quadrature(1.0) - 0.157_299_207_050_285_1).abs() < 1e-12);
        assert!(erfc_upper_check(-0.1).is_err());
    }

    #[test]
    fn kronrod_rules_are_exact_on_polynomials() {
        // K15 is exact to degree 22, G7 to degree 13 (error estimate ~0).
        for deg in 0..=13 {
            let (v, e) = gauss_kronrod_15(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert!((v - 1.0 / (deg + 1) as f64).abs() < 1e-15, "deg {deg}");
            assert!(e < 1e-14, "deg {deg}: err {e}");
        }
        for deg in 14..=22 {
            let (v, _) = gauss_kronrod_15(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert!((v - 1.0 / (deg + 1) as f64).abs() < 1e-14, "deg {deg}");
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let k = GaussianKernelSpec::new(4.0).unwrap();
        assert_eq!(gaussian_kernel(k, 0.0, 1.0).unwrap(), 1.0);
        assert!((gaussian_kernel(k, 2.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(k, 0.0, 0.0).is_err());
        assert!(GaussianKernelSpec::new(0.0).is_err());
    }

    #[test]
    fn kernel_mass() {
        let k = GaussianKernelSpec::new(4.0).unwrap();
        for t in [0.5, 1.0, 4.0] {
            let half = 8.0 * (k.m * t).sqrt() + 1.0;
            let g = Grid1D::symmetric(half, 4001).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|&x| gaussian_kernel(k, x, t).unwrap()).collect();
            let mass = trapezoid(&vals, g.h());
            let exact = (std::f64::consts::PI * k.m).sqrt();
            assert!((mass / exact - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_semigroup_by_convolution() {
        let k = GaussianKernelSpec::new(4.0).unwrap();
        let (t1, t2) = (0.7, 1.3);
        let g = Grid1D::symmetric(30.0, 3001).unwrap();
        let xs = g.nodes();
        let h = g.h();
        let a: Vec<f64> = xs.iter().map(|&x| gaussian_kernel(k, x, t1).unwrap()).collect();
        let mut worst: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate().step_by(25) {
            if x.abs() > 10.0 {
                continue;
            }
            let b: Vec<f64> = xs.iter().map(|&y| gaussian_kernel(k, x - y, t2).unwrap()).collect();
            let conv = inner(&a, &b, h);
            let exact = (std::f64::consts::PI * k.m).sqrt() * gaussian_kernel(k, x, t1 + t2).unwrap();
            worst = worst.max((conv - exact).abs());
            peak = peak.max(exact.abs());
            let _ = i;
        }
        assert!(worst / peak < 1e-4);
    }

    #[test]
    fn lp_norm_examples() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let ones = vec![1.0; 101];
        assert!((discrete_lp_norm(&ones, &g, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(discrete_lp_norm(&ones, &g, f64::INFINITY).unwrap(), 1.0);
        assert!(discrete_lp_norm(&ones, &g, 0.5).is_err());
        let g = Grid1D::symmetric(20.0, 4001).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| (-x.abs()).exp()).collect();
        let exact = 2.0 * (1.0 - (-20.0f64).exp());
        assert!((discrete_lp_norm(&v, &g, 1.0).unwrap() - exact).abs() < 1e-4);
    }

    #[test]
    fn second_difference_examples() {
        let g = Grid1D::new(-1.0, 2.0, 31).unwrap();
        let a = second_difference_operator(&g);
        let xs = g.nodes();
        let interior = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { xs[1..g.n - 1].iter().map(|&x| f(x)).collect() };
        let c = a.matvec(&interior(&|_| 1.0));
        for v in &c[1..c.len() - 1] {
            assert!(v.abs() < 1e-10);
        }
        let q = a.matvec(&interior(&|x| x * x));
        for v in &q[1..q.len() - 1] {
            assert!((v - 2.0).abs() < 1e-9);
        }
        assert_eq!(a.max_asymmetry(), 0.0);
        // Second-order convergence on sin.
        let err = |n: usize| {
            let g = Grid1D::new(0.0, 3.0, n).unwrap();
            let a = second_difference_operator(&g);
            let xs = g.nodes();
            let s: Vec<f64> = xs[1..n - 1].iter().map(|x| x.sin()).collect();
            let d = a.matvec(&s);
            (1..d.len() - 1).map(|i| (d[i] + s[i]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn order4_operator_is_symmetric_negative_and_fourth_order() {
        let g = Grid1D::new(0.0, 3.0, 61).unwrap();
        let a = second_difference_operator_order4(&g);
        assert_eq!(a.max_asymmetry(), 0.0);
        let top = crate::linalg::top_eigenvalues_symmetric(&a, 1, 1e-14)[0];
        assert!(top < 0.0);
        let err = |n: usize| {
            let g = Grid1D::new(0.0, 3.0, n).unwrap();
            let a = second_difference_operator_order4(&g);
            let xs = g.nodes();
            let s: Vec<f64> = xs[1..n - 1].iter().map(|x| x.sin()).collect();
            let d = a.matvec(&s);
            (2..d.len() - 2).map(|i| (d[i] + s[i]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn derivative_orders() {
        let g = Grid1D::new(0.0, 2.0, 201).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x.exp()).collect();
        let d = derivative(&v, g.h());
        let dd = second_derivative(&v, g.h());
        for (i, x) in g.nodes().iter().enumerate() {
            assert!((d[i] - x.exp()).abs() < 1e-3);
            assert!((dd[i] - x.exp()).abs() < 1e-2);
            if (2..199).contains(&i) {
                assert!((d[i] - x.exp()).abs() < 1e-8);
                assert!((dd[i] - x.exp()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let g = Grid1D::new(-1.0, 1.0, 11).unwrap();
        let f = |x: f64| 2.0 * x * x * x - x + 0.5;
        let fp = |x: f64| 6.0 * x * x - 1.0;
        let fs: Vec<f64> = g.nodes().iter().map(|&x| f(x)).collect();
        let ds: Vec<f64> = g.nodes().iter().map(|&x| fp(x)).collect();
        for k in 0..50 {
            let x = -0.99 + k as f64 * 0.0397;
            let (v, d) = hermite(&g, &fs, &ds, x);
            assert!((v - f(x)).abs() < 1e-13);
            assert!((d - fp(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-13);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn errfn_reflection(x in -6.0f64..6.0) {
            prop_assert!((errfn(x) + errfn(-x) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn errfn_monotone(x in -8.0f64..8.0, dx in 1e-6f64..0.5) {
            prop_assert!(errfn(x + dx) >= errfn(x));
        }

        #[test]
        fn grid_nodes_increase(a in -50.0f64..0.0, w in 0.1f64..50.0, n in 3usize..500) {
            let g = Grid1D::new(a, a + w, n).unwrap();
            let xs = g.nodes();
            prop_assert!(xs.windows(2).all(|p| p[1] > p[0]));
            prop_assert!(g.h() > 0.0);
        }
    }
}

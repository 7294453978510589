//! Pointwise bound templates and minimal-constant fits.
//!
//! Two-term templates C₁A + C₂B are fitted by minimising the weighted total
//! α C₁ + β C₂ (α = √(4πC₀): x-mass of the Gaussian part at t = 1; β = 2/η₀:
//! x-mass of the exponential part) subject to C₁aᵢ + C₂bᵢ ≥ qᵢ, which is a
//! convex piecewise-linear problem in C₂ alone. Single-term Gaussian
//! templates pick M from {2^k} by the smallest C√(πM).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    TildeG,
    TildeGY,
    TildeH,
    TildeHY,
    EBounds,
    ETildeT,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] =
        [Self::TildeG, Self::TildeGY, Self::TildeH, Self::TildeHY, Self::EBounds, Self::ETildeT];

    pub fn name(self) -> &'static str {
        match self {
            Self::TildeG => "tilde_G",
            Self::TildeGY => "tilde_G_y",
            Self::TildeH => "tilde_H",
            Self::TildeHY => "tilde_H_y",
            Self::EBounds => "e_bounds",
            Self::ETildeT => "e_tilde_t",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub x: f64,
    pub t: f64,
    pub y: f64,
    /// |quantity| at (x, t, y).
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub template: TemplateId,
    /// Which sampled quantity (e.g. "e_t" within e_bounds).
    pub quantity: String,
    /// C for single-term templates, C₁ + C₂ for two-term ones.
    pub c: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c0: Option<f64>,
    pub m: Option<f64>,
    pub eta0: f64,
    pub sup_ratio: f64,
    pub samples: usize,
    /// Largest relative change of the (weighted) constants over the
    /// refined/enlarged sample sets.
    pub refinement_change: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub eta0: f64,
    /// Values below this are numerically zero (quadrature tolerance).
    pub noise_floor: f64,
    pub c0_exponents: (i32, i32),
    pub m_exponents: (i32, i32),
    pub max_change: f64,
}

impl FitOptions {
    pub fn new(eta0: f64) -> Self {
        Self { eta0, noise_floor: 1e-8, c0_exponents: (-2, 6), m_exponents: (0, 10), max_change: 0.1 }
    }
}

/// t^{−p} e^{−η₀t − r²/(w t)}.
pub fn gaussian_part(t: f64, r: f64, w: f64, p: f64, eta0: f64) -> f64 {
    t.powf(-p) * (-eta0 * t - r * r / (w * t)).exp()
}

/// e^{−η₀(t + r)}.
pub fn exponential_part(t: f64, r: f64, eta0: f64) -> f64 {
    (-eta0 * (t + r)).exp()
}

/// e^{−η₀|y|}(e^{−(z+t)²/Mt} + e^{−(z−t)²/Mt})/√(t+1), z = x − y.
pub fn two_gaussian_part(s: &BoundSample, m: f64, eta0: f64) -> f64 {
    let z = s.x - s.y;
    let t = s.t;
    (-eta0 * s.y.abs()).exp() * ((-(z + t).powi(2) / (m * t)).exp() + (-(z - t).powi(2) / (m * t)).exp()) / (t + 1.0).sqrt()
}

fn t_power(id: TemplateId) -> f64 {
    match id {
        TemplateId::TildeGY | TemplateId::TildeHY => 1.0,
        _ => 0.5,
    }
}

fn effective(q: f64, floor: f64) -> f64 {
    (q.abs() - floor).max(0.0)
}

/// Smallest C with C·aᵢ ≥ qᵢ.
fn single_constant(samples: &[BoundSample], floor: f64, a: impl Fn(&BoundSample) -> f64) -> f64 {
    samples.iter().fold(0.0f64, |c, s| {
        let q = effective(s.q, floor);
        if q == 0.0 {
            c
        } else {
            c.max(q / a(s))
        }
    })
}

/// min α C₁ + β C₂ s.t. C₁aᵢ + C₂bᵢ ≥ qᵢ, C₁, C₂ ≥ 0.
fn two_term_constants(q: &[f64], a: &[f64], b: &[f64], alpha: f64, beta: f64) -> (f64, f64) {
    let c1_of = |c2: f64| {
        q.iter().zip(a).zip(b).fold(0.0f64, |m, ((&qi, &ai), &bi)| {
            let r = qi - c2 * bi;
            if r <= 0.0 {
                m
            } else {
                m.max(r / ai)
            }
        })
    };
    let hi = q.iter().zip(b).fold(0.0f64, |m, (&qi, &bi)| if qi > 0.0 { m.max(qi / bi) } else { m });
    if !hi.is_finite() {
        return (c1_of(0.0), f64::INFINITY);
    }
    // where the Gaussian part underflows, C₂ alone must carry the bound
    let floor = q.iter().zip(a).zip(b).fold(0.0f64, |m, ((&qi, &ai), &bi)| if qi > 0.0 && ai == 0.0 { m.max(qi / bi) } else { m });
    let phi = |c2: f64| alpha * c1_of(c2) + beta * c2;
    // golden section on the convex φ over [floor, hi]
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut up) = (floor, hi);
    let (mut x1, mut x2) = (up - g * (up - lo), lo + g * (up - lo));
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..200 {
        if up - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
        if f1 <= f2 {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - g * (up - lo);
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (up - lo);
            f2 = phi(x2);
        }
    }
    // the endpoints are candidates too (piecewise linear)
    let mut best = (phi(floor), floor);
    for c in [lo, up, 0.5 * (lo + up), hi] {
        let v = phi(c);
        if v < best.0 {
            best = (v, c);
        }
    }
    (c1_of(best.1), best.1)
}

fn powers_of_two(range: (i32, i32)) -> impl Iterator<Item = f64> {
    (range.0..=range.1).map(|k| 2f64.powi(k))
}

/// Template value for single-term fits at shape parameter `m` (M, or unused).
fn single_basis(id: TemplateId, quantity: &str, s: &BoundSample, m: f64, eta0: f64) -> f64 {
    let r = (s.x - s.y).abs();
    match id {
        TemplateId::TildeH | TemplateId::TildeHY => gaussian_part(s.t, r, m, t_power(id), eta0),
        TemplateId::EBounds => {
            if quantity.starts_with("e_t") {
                exponential_part(s.t, s.y.abs(), eta0)
            } else {
                (-eta0 * s.y.abs()).exp()
            }
        }
        TemplateId::ETildeT => two_gaussian_part(s, m, eta0),
        _ => unreachable!("two-term template"),
    }
}

fn is_two_term(id: TemplateId) -> bool {
    matches!(id, TemplateId::TildeG | TemplateId::TildeGY)
}

fn has_shape(id: TemplateId) -> bool {
    !matches!(id, TemplateId::EBounds)
}

fn two_term_fit(samples: &[BoundSample], id: TemplateId, c0: f64, opts: &FitOptions) -> (f64, f64, f64) {
    let p = t_power(id);
    let q: Vec<f64> = samples.iter().map(|s| effective(s.q, opts.noise_floor)).collect();
    let a: Vec<f64> = samples.iter().map(|s| gaussian_part(s.t, (s.x - s.y).abs(), 4.0 * c0, p, opts.eta0)).collect();
    let b: Vec<f64> = samples.iter().map(|s| exponential_part(s.t, (s.x - s.y).abs(), opts.eta0)).collect();
    let alpha = (4.0 * std::f64::consts::PI * c0).sqrt();
    let beta = 2.0 / opts.eta0;
    let (c1, c2) = two_term_constants(&q, &a, &b, alpha, beta);
    (c1, c2, alpha * c1 + beta * c2)
}

fn sup_ratio(samples: &[BoundSample], bound: impl Fn(&BoundSample) -> f64) -> f64 {
    samples.iter().fold(0.0f64, |m, s| {
        let b = bound(s);
        if s.q == 0.0 {
            m
        } else {
            m.max(s.q.abs() / b)
        }
    })
}

/// Fit the minimal constants of a template to |quantity| samples.
pub fn fit_pointwise_bound(samples: &[BoundSample], id: TemplateId, quantity: &str, opts: &FitOptions) -> Result<BoundFit> {
    if samples.is_empty() {
        return Err(invalid("empty sample set"));
    }
    if !(opts.eta0 > 0.0) {
        return Err(invalid("η₀ must be positive"));
    }
    let floor = opts.noise_floor;
    let mut fit = BoundFit {
        template: id,
        quantity: quantity.to_string(),
        c: f64::INFINITY,
        c1: None,
        c2: None,
        c0: None,
        m: None,
        eta0: opts.eta0,
        sup_ratio: f64::NAN,
        samples: samples.len(),
        refinement_change: None,
        pass: false,
    };
    if is_two_term(id) {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for c0 in powers_of_two(opts.c0_exponents) {
            let (c1, c2, obj) = two_term_fit(samples, id, c0, opts);
            if best.map_or(true, |b| obj < b.3) {
                best = Some((c0, c1, c2, obj));
            }
        }
        let (c0, c1, c2, _) = best.unwrap();
        fit.c0 = Some(c0);
        fit.c1 = Some(c1);
        fit.c2 = Some(c2);
        fit.c = c1 + c2;
    } else if has_shape(id) {
        let mut best: Option<(f64, f64, f64)> = None;
        for m in powers_of_two(opts.m_exponents) {
            let c = single_constant(samples, floor, |s| single_basis(id, quantity, s, m, opts.eta0));
            let obj = c * (std::f64::consts::PI * m).sqrt();
            if best.map_or(true, |b| obj < b.2) {
                best = Some((m, c, obj));
            }
        }
        let (m, c, _) = best.unwrap();
        fit.m = Some(m);
        fit.c = c;
    } else {
        fit.c = single_constant(samples, floor, |s| single_basis(id, quantity, s, 1.0, opts.eta0));
    }
    fit.sup_ratio = sup_ratio(samples, |s| template_value(&fit, s) + floor);
    fit.pass = fit.c.is_finite();
    Ok(fit)
}

/// The fitted template evaluated at a sample point.
pub fn template_value(fit: &BoundFit, s: &BoundSample) -> f64 {
    let r = (s.x - s.y).abs();
    match (fit.c1, fit.c2, fit.c0) {
        (Some(c1), Some(c2), Some(c0)) => {
            c1 * gaussian_part(s.t, r, 4.0 * c0, t_power(fit.template), fit.eta0) + c2 * exponential_part(s.t, r, fit.eta0)
        }
        _ => fit.c * single_basis(fit.template, &fit.quantity, s, fit.m.unwrap_or(1.0), fit.eta0),
    }
}

/// Refit with the shape parameter (C₀ or M) held fixed.
pub fn refit(fit: &BoundFit, samples: &[BoundSample], opts: &FitOptions) -> BoundFit {
    let mut out = fit.clone();
    out.samples = samples.len();
    if let Some(c0) = fit.c0 {
        let (c1, c2, _) = two_term_fit(samples, fit.template, c0, opts);
        out.c1 = Some(c1);
        out.c2 = Some(c2);
        out.c = c1 + c2;
    } else {
        let m = fit.m.unwrap_or(1.0);
        out.c = single_constant(samples, opts.noise_floor, |s| single_basis(fit.template, &fit.quantity, s, m, opts.eta0));
    }
    out.sup_ratio = sup_ratio(samples, |s| template_value(&out, s) + opts.noise_floor);
    out.refinement_change = None;
    out
}

/// Relative change between two fits of the same shape (weighted for two-term).
pub fn constant_change(a: &BoundFit, b: &BoundFit) -> f64 {
    match (a.c0, a.c1, a.c2, b.c1, b.c2) {
        (Some(c0), Some(a1), Some(a2), Some(b1), Some(b2)) => {
            let alpha = (4.0 * std::f64::consts::PI * c0).sqrt();
            let beta = 2.0 / a.eta0;
            (alpha * (a1 - b1).abs() + beta * (a2 - b2).abs()) / (alpha * a1 + beta * a2)
        }
        _ => {
            if a.c == 0.0 && b.c == 0.0 {
                0.0
            } else {
                (a.c - b.c).abs() / a.c.max(b.c)
            }
        }
    }
}

/// Refit on each variant sample set, record the largest change, and set the
/// pass flag (finite constants, change within tolerance).
pub fn with_refinement(mut fit: BoundFit, variants: &[&[BoundSample]], opts: &FitOptions) -> BoundFit {
    let mut worst = 0.0f64;
    for v in variants {
        let r = refit(&fit, v, opts);
        worst = worst.max(constant_change(&fit, &r));
    }
    fit.refinement_change = Some(worst);
    fit.pass = fit.c.is_finite() && worst.is_finite() && worst < opts.max_change;
    fit
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_samples(q: impl Fn(f64, f64, f64) -> f64) -> Vec<BoundSample> {
        let mut v = vec![];
        for i in -10..=10 {
            for k in 0..12 {
                for j in -4..=4 {
                    let (x, t, y) = (i as f64, 0.1 * 1.5f64.powi(k), j as f64);
                    v.push(BoundSample { x, t, y, q: q(x, t, y) });
                }
            }
        }
        v
    }

    #[test]
    fn fit_of_itself_single() {
        let eta0 = 0.084375;
        let s = grid_samples(|x, t, y| gaussian_part(t, (x - y).abs(), 8.0, 0.5, eta0));
        let mut o = FitOptions::new(eta0);
        o.noise_floor = 0.0;
        let f = fit_pointwise_bound(&s, TemplateId::TildeH, "H", &o).unwrap();
        assert_eq!(f.m, Some(8.0));
        assert!((f.c - 1.0).abs() < 1e-10, "{}", f.c);
        assert!((f.sup_ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_of_itself_two_term() {
        let eta0 = 0.084375;
        let s = grid_samples(|x, t, y| exponential_part(t, (x - y).abs(), eta0));
        let mut o = FitOptions::new(eta0);
        o.noise_floor = 0.0;
        let f = fit_pointwise_bound(&s, TemplateId::TildeG, "G", &o).unwrap();
        assert!((f.c2.unwrap() - 1.0).abs() < 1e-10, "{f:?}");
        assert!(f.c1.unwrap() < 1e-8);
        assert!(f.sup_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn refit_on_same_samples_is_identity() {
        let eta0 = 0.1;
        let s = grid_samples(|x, t, y| 0.3 * gaussian_part(t, (x - y).abs(), 12.0, 0.5, eta0) + 0.01 * exponential_part(t, (x - y).abs(), eta0));
        let o = FitOptions::new(eta0);
        let f = fit_pointwise_bound(&s, TemplateId::TildeG, "G", &o).unwrap();
        let g = with_refinement(f.clone(), &[&s], &o);
        assert!(g.refinement_change.unwrap() < 1e-12);
        assert!(g.pass);
    }

    proptest! {
        #[test]
        fn sup_ratio_never_exceeds_one(amp in 0.01f64..10.0, w in 1.0f64..40.0, c in 0.0f64..1.0) {
            let eta0 = 0.08;
            let s = grid_samples(|x, t, y| amp * gaussian_part(t, (x - y).abs(), w, 0.5, eta0) * (1.0 + c * (x * y).sin()));
            let mut o = FitOptions::new(eta0);
            o.noise_floor = 0.0;
            for id in [TemplateId::TildeG, TemplateId::TildeH] {
                let f = fit_pointwise_bound(&s, id, "q", &o).unwrap();
                prop_assert!(f.sup_ratio <= 1.0 + 1e-9, "{:?}", f);
                prop_assert!(f.c.is_finite());
            }
        }
    }
}

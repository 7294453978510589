//! Empirical checks on nonlinear runs: orbital decay and phase convergence,
//! pointwise Gaussian envelopes, and the damping inequality.

use serde::{Deserialize, Serialize};

use super::*;
use crate::numerics::{errfn, linear_fit, LineFit};
use crate::spectral::SpectralData;

/// A full nonlinear experiment on one initial perturbation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearRun {
    pub perturbation: Perturbation,
    pub options: NonlinearOptions,
    /// Snapshots at the scheduled times only.
    pub trajectory: Trajectory,
    pub phase: PhaseSeries,
    pub phase_fit: Vec<PhaseFit>,
    pub field: Option<PhaseField>,
    /// |u0|_{L¹∩L∞}, or the Gaussian amplitude for Gaussian data.
    pub e0: f64,
}

/// Evolve, extract the scalar phase (all steps), fit the phase at the
/// scheduled snapshots and, if asked, march the α̃ field.
pub fn run_experiment(
    sys: &ReactionSystem,
    profile: &FrontProfile,
    spectral: &SpectralData,
    eta0: f64,
    perturbation: &Perturbation,
    options: &NonlinearOptions,
    with_field: bool,
) -> Result<NonlinearRun> {
    options.validate()?;
    let initial = perturbation.initial_state(profile)?;
    let traj = evolve_pde(sys, profile, initial, options.t_end, options.dt, options.phase_stride)?;
    let phase = extract_phase_integral(&traj, sys, profile, spectral, eta0)?;
    let record = options.snapshots.steps(traj.ds, traj.times.len() - 1);
    let field = if with_field {
        let m = match perturbation {
            Perturbation::Gaussian { m, .. } => *m,
            _ => 8.0,
        };
        let fo = FieldOptions { record: record.clone(), m, weight_half_width: options.box_half_width };
        Some(extract_phase_field(&traj, sys, profile, spectral, eta0, &fo)?)
    } else {
        None
    };
    let kept = Trajectory {
        grid: traj.grid,
        dt: traj.dt,
        ds: traj.ds,
        times: record.iter().map(|&k| traj.times[k]).collect(),
        states: record.iter().map(|&k| traj.states[k].clone()).collect(),
    };
    let phase_fit = extract_phase_fit(&kept, profile, 2.0)?;
    let e0 = match perturbation {
        Perturbation::Gaussian { amplitude, .. } => amplitude.abs(),
        _ => phase.e0,
    };
    Ok(NonlinearRun { perturbation: perturbation.clone(), options: options.clone(), trajectory: kept, phase, phase_fit, field, e0 })
}

/// Roundoff floor of |α(t) − α∞|.
pub const ALPHA_FLOOR: f64 = 1e-13;

/// Exponential rate −slope of log(values) over t ∈ [from, to], skipping
/// values at or below the floor; None if fewer than 5 points remain.
pub fn fit_rate(times: &[f64], values: &[f64], from: f64, to: f64, floor: f64) -> Option<(f64, LineFit)> {
    let (mut ts, mut ls) = (vec![], vec![]);
    for (&t, &v) in times.iter().zip(values) {
        if t >= from && t <= to && v > floor {
            ts.push(t);
            ls.push(v.ln());
        }
    }
    if ts.len() < 5 {
        return None;
    }
    linear_fit(&ts, &ls).map(|f| (-f.slope, f))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateCheck {
    pub rate: Option<f64>,
    pub r2: Option<f64>,
    /// Required rate.
    pub threshold: f64,
    pub pass: bool,
}

impl RateCheck {
    fn new(fit: Option<(f64, LineFit)>, threshold: f64, converged: bool) -> Self {
        match fit {
            Some((rate, lf)) => Self { rate: Some(rate), r2: Some(lf.r2), threshold, pass: rate >= threshold },
            None => Self { rate: None, r2: None, threshold, pass: converged },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitalDecayReport {
    pub eta0: f64,
    pub eta: f64,
    pub e0: f64,
    /// ‖ũ − ū(· − α)‖_{L²}, ‖·‖_{L∞}.
    pub rate_l2: RateCheck,
    pub rate_linf: RateCheck,
    pub alpha_inf: f64,
    /// |α(t) − α∞|.
    pub alpha_tail: RateCheck,
    /// sup |α̇|e^{η₀t}.
    pub alpha_dot_constant: f64,
    /// Relative mismatch of α̇ against differenced α, for t ≥ 2.
    pub alpha_dot_mismatch: f64,
    pub zeta_sup: f64,
    /// sup ζ / E0.
    pub zeta_ratio: f64,
    /// sup_t max_p ‖ũ − ū‖_p / E0.
    pub uniform_constant: f64,
    pub max_iterations: usize,
    pub pass: bool,
}

pub fn verify_orbital_decay(run: &NonlinearRun, eta0: f64, eta: f64) -> OrbitalDecayReport {
    let ph = &run.phase;
    let o = &run.options;
    let t_end = o.t_end;
    let l2: Vec<f64> = ph.orbital.iter().map(|v| v[0]).collect();
    let linf: Vec<f64> = ph.orbital.iter().map(|v| v[1]).collect();
    let quiet = |v: &[f64]| ph.times.iter().zip(v).all(|(&t, &x)| t < o.fit_from || x <= o.noise_floor);
    let rate_l2 = RateCheck::new(fit_rate(&ph.times, &l2, o.fit_from, t_end, o.noise_floor), eta0, quiet(&l2));
    let rate_linf = RateCheck::new(fit_rate(&ph.times, &linf, o.fit_from, t_end, o.noise_floor), eta0, quiet(&linf));
    let a_inf = ph.alpha_inf();
    let tail: Vec<f64> = ph.alpha.iter().map(|a| (a - a_inf).abs()).collect();
    // α is exact history sums, so its floor is roundoff, not the PDE error;
    // it settles right after the cutoff window, so the fit starts there.
    // α∞ is the last sample, so the window stops well short of t_end.
    let (tail_from, tail_to) = (2.0 + 2.0 * run.trajectory.ds, 0.75 * t_end);
    let tail_floor = ALPHA_FLOOR.max(1e-10 * a_inf.abs());
    let tail_quiet = ph.times.iter().zip(&tail).all(|(&t, &x)| t < tail_from || t > tail_to || x <= tail_floor);
    let alpha_tail = RateCheck::new(fit_rate(&ph.times, &tail, tail_from, tail_to, tail_floor), eta0, tail_quiet);
    let alpha_dot_constant =
        ph.times.iter().zip(&ph.alpha_dot).map(|(&t, a)| a.abs() * (eta0 * t).exp()).fold(0.0, f64::max);
    let alpha_dot_mismatch = ph.alpha_dot_mismatch(2.0 + 2.0 * run.trajectory.ds);
    let zeta_sup = ph.zeta.last().copied().unwrap_or(0.0);
    let e0 = ph.e0;
    let ratio = |x: f64| if e0 > 0.0 { x / e0 } else if x == 0.0 { 0.0 } else { f64::INFINITY };
    let uniform = ph.raw.iter().map(|r| r[0].max(r[2])).fold(0.0, f64::max);
    let max_iterations = ph.iterations.iter().copied().max().unwrap_or(0);
    let pass = rate_l2.pass
        && rate_linf.pass
        && alpha_tail.pass
        && alpha_dot_constant.is_finite()
        && alpha_dot_mismatch < 1e-2
        && max_iterations <= 5;
    OrbitalDecayReport {
        eta0,
        eta,
        e0,
        rate_l2,
        rate_linf,
        alpha_inf: a_inf,
        alpha_tail,
        alpha_dot_constant,
        alpha_dot_mismatch,
        zeta_sup,
        zeta_ratio: ratio(zeta_sup),
        uniform_constant: ratio(uniform),
        max_iterations,
        pass,
    }
}

/// Integral phase vs least-squares phase at the snapshots with t ≥ `from`:
/// largest |α_fit − α| − (rel·|α| + abs), pass if ≤ 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    pub max_abs_difference: f64,
    pub worst_excess: f64,
    pub all_unique: bool,
    pub pass: bool,
}

pub fn gauge_consistency(run: &NonlinearRun, from: f64, rel: f64, abs: f64) -> GaugeReport {
    let ds = run.phase.times.get(1).copied().unwrap_or(1.0);
    let (mut worst, mut maxd, mut unique) = (f64::NEG_INFINITY, 0.0f64, true);
    for f in run.phase_fit.iter().filter(|f| f.t >= from) {
        let k = (f.t / ds).round() as usize;
        let a = run.phase.alpha[k.min(run.phase.alpha.len() - 1)];
        let d = (f.alpha - a).abs();
        maxd = maxd.max(d);
        worst = worst.max(d - (rel * a.abs() + abs));
        unique &= f.unique;
    }
    GaugeReport { max_abs_difference: maxd, worst_excess: worst, all_unique: unique, pass: worst <= 0.0 && unique }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranslationReport {
    pub delta: f64,
    pub alpha_inf: f64,
    pub alpha_fit_final: f64,
    pub relative_error: f64,
    /// ‖ũ(·,T) − ū(· − α(T))‖_∞.
    pub final_residual: f64,
    pub pass: bool,
}

pub fn translation_oracle(run: &NonlinearRun, delta: f64) -> TranslationReport {
    let a = run.phase.alpha_inf();
    let rel = (a - delta).abs() / delta.abs();
    let fin = run.phase.orbital.last().map(|v| v[1]).unwrap_or(f64::NAN);
    TranslationReport {
        delta,
        alpha_inf: a,
        alpha_fit_final: run.phase_fit.last().map(|f| f.alpha).unwrap_or(f64::NAN),
        relative_error: rel,
        final_residual: fin,
        pass: rel <= 0.05 && fin < 1e-6,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub zeta_full: f64,
    pub zeta_half: f64,
    /// zeta_full / zeta_half, ideally 2.
    pub ratio: f64,
    pub pass: bool,
}

/// Linear response: halving E0 should halve sup ζ (within `tol` relative).
pub fn zeta_scaling(full: &NonlinearRun, half: &NonlinearRun, tol: f64) -> ScalingReport {
    let zf = full.phase.zeta.last().copied().unwrap_or(0.0);
    let zh = half.phase.zeta.last().copied().unwrap_or(0.0);
    let ratio = zf / zh;
    ScalingReport { zeta_full: zf, zeta_half: zh, ratio, pass: ratio.is_finite() && (ratio / 2.0 - 1.0).abs() <= tol }
}

/// Fitted prefactors of the quadratic residual bounds over one run.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct QuadraticConstants {
    /// sup ‖Q‖∞/‖v‖²∞.
    pub c_q: f64,
    /// sup ‖S‖∞/(‖v‖∞‖α̃_x‖∞).
    pub c_s: f64,
    /// sup ‖T‖∞/(‖v‖∞‖α̃_x‖∞).
    pub c_t: f64,
}

pub fn quadratic_constants(field: &PhaseField, floor: f64) -> QuadraticConstants {
    let mut c = QuadraticConstants::default();
    for s in &field.steps {
        if s.v_sup > floor.sqrt() {
            c.c_q = c.c_q.max(s.q_sup / (s.v_sup * s.v_sup));
        }
        if s.v_sup > floor && s.a_x_sup > floor {
            let d = s.v_sup * s.a_x_sup;
            c.c_s = c.c_s.max(s.s_sup / d);
            c.c_t = c.c_t.max(s.t_sup / d);
        }
    }
    c
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticReport {
    pub full: QuadraticConstants,
    pub half: QuadraticConstants,
    pub max_change: f64,
    pub pass: bool,
}

pub fn quadratic_stability(full: &PhaseField, half: &PhaseField, floor: f64, tol: f64) -> QuadraticReport {
    let (a, b) = (quadratic_constants(full, floor), quadratic_constants(half, floor));
    let ch = |x: f64, y: f64| if x == 0.0 && y == 0.0 { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
    let max_change = ch(a.c_q, b.c_q).max(ch(a.c_s, b.c_s)).max(ch(a.c_t, b.c_t));
    QuadraticReport { full: a, half: b, max_change, pass: max_change < tol }
}

// ---------------------------------------------------------------------------
// pointwise envelopes

/// sup |f|/(E0 · template) on a base box and on the doubled box, with the
/// width M fixed from the base box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub quantity: String,
    pub c: f64,
    pub m: f64,
    pub c_enlarged: f64,
    pub change: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug)]
enum Envelope {
    /// (1+t)^{−½} e^{−η₀t/2 − x²/(2M(1+t))}
    Decaying,
    /// |errfn((x+t)/√(Mt)) − errfn((x−t)/√(Mt))|
    Window,
    /// e^{−(x+t)²/(Mt)} + e^{−(x−t)²/(Mt)}
    TwoGaussian,
}

fn envelope(kind: Envelope, x: f64, t: f64, m: f64, eta0: f64) -> f64 {
    match kind {
        Envelope::Decaying => (1.0 + t).powf(-0.5) * (-0.5 * eta0 * t - x * x / (2.0 * m * (1.0 + t))).exp(),
        Envelope::Window => {
            let r = (m * t).sqrt();
            (errfn((x + t) / r) - errfn((x - t) / r)).abs()
        }
        Envelope::TwoGaussian => (-(x + t).powi(2) / (m * t)).exp() + (-(x - t).powi(2) / (m * t)).exp(),
    }
}

struct Sample {
    x: f64,
    t: f64,
    q: f64,
}

fn sup_ratio(samples: &[Sample], kind: Envelope, m: f64, e0: f64, eta0: f64, floor: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let q = (s.q.abs() - floor).max(0.0);
            if q == 0.0 {
                return 0.0;
            }
            q / (e0 * envelope(kind, s.x, s.t, m, eta0))
        })
        .fold(0.0, f64::max)
}

const M_EXPONENTS: std::ops::RangeInclusive<i32> = 0..=10;

#[allow(clippy::too_many_arguments)]
fn fit_envelope(
    quantity: &str,
    base: &[Sample],
    enlarged: &[Sample],
    kind: Envelope,
    m_fixed: Option<f64>,
    e0: f64,
    eta0: f64,
    floor: f64,
) -> EnvelopeFit {
    let (m, c) = match m_fixed {
        Some(m) => (m, sup_ratio(base, kind, m, e0, eta0, floor)),
        None => M_EXPONENTS
            .map(|k| {
                let m = 2f64.powi(k);
                (m, sup_ratio(base, kind, m, e0, eta0, floor))
            })
            .min_by(|a, b| (a.1 * a.0.sqrt()).total_cmp(&(b.1 * b.0.sqrt())))
            .unwrap(),
    };
    let c_enlarged = sup_ratio(enlarged, kind, m, e0, eta0, floor);
    let change = if c == 0.0 && c_enlarged == 0.0 { 0.0 } else { (c_enlarged - c).abs() / c.max(c_enlarged) };
    EnvelopeFit {
        quantity: quantity.into(),
        c,
        m,
        c_enlarged,
        change,
        pass: c.is_finite() && c_enlarged.is_finite() && change < 0.1,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArgmaxCheck {
    pub t: f64,
    pub x: f64,
    /// min(|x − t|, |x + t|).
    pub distance: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub e0: f64,
    pub v: EnvelopeFit,
    pub alpha: EnvelopeFit,
    pub alpha_x: EnvelopeFit,
    pub alpha_t: EnvelopeFit,
    pub argmax: Vec<ArgmaxCheck>,
    pub pass: bool,
}

/// Envelope fits of v, α̃, α̃_x and α̃_t over the snapshot box
/// |x| ≤ W, t ≤ T (and its doubling), plus localisation of max |α̃_x| near
/// the outgoing fronts x = ±t for t ∈ [5, 20].
pub fn verify_pointwise_gaussian(run: &NonlinearRun, m_data: f64, eta0: f64) -> Result<PointwiseReport> {
    let field = run.field.as_ref().ok_or_else(|| invalid("pointwise check needs the α̃ field"))?;
    let o = &run.options;
    let g = &run.trajectory.grid;
    let xs = g.nodes();
    let stride = ((0.25 / g.h()).round() as usize).max(1);
    let collect = |w: f64, tmax: f64, pick: &dyn Fn(&FieldSnapshot, usize) -> f64, t_min: f64| -> Vec<Sample> {
        let mut out = vec![];
        for snap in field.snapshots.iter().filter(|s| s.t <= tmax + 1e-9 && s.t > t_min) {
            for i in (0..g.n).step_by(stride) {
                if xs[i].abs() <= w {
                    out.push(Sample { x: xs[i], t: snap.t, q: pick(snap, i) });
                }
            }
        }
        out
    };
    let (w, tb) = (o.box_half_width, o.box_t_end);
    let e0 = run.e0;
    let floor = o.noise_floor;
    let pv = |s: &FieldSnapshot, i: usize| s.v[i];
    let pa = |s: &FieldSnapshot, i: usize| s.alpha.a[i];
    let pax = |s: &FieldSnapshot, i: usize| s.alpha.a_x[i];
    let pat = |s: &FieldSnapshot, i: usize| s.alpha.a_t[i];
    let v = fit_envelope("v", &collect(w, tb, &pv, -1.0), &collect(2.0 * w, 2.0 * tb, &pv, -1.0), Envelope::Decaying, None, e0, eta0, floor);
    // α̃ vanishes for t ≤ 1; the window templates are singular at t = 0.
    let alpha_x = fit_envelope(
        "alpha_x",
        &collect(w, tb, &pax, 1.0),
        &collect(2.0 * w, 2.0 * tb, &pax, 1.0),
        Envelope::TwoGaussian,
        None,
        e0,
        eta0,
        floor,
    );
    let alpha_t = fit_envelope(
        "alpha_t",
        &collect(w, tb, &pat, 1.0),
        &collect(2.0 * w, 2.0 * tb, &pat, 1.0),
        Envelope::TwoGaussian,
        Some(alpha_x.m),
        e0,
        eta0,
        floor,
    );
    let alpha = fit_envelope(
        "alpha",
        &collect(w, tb, &pa, 1.0),
        &collect(2.0 * w, 2.0 * tb, &pa, 1.0),
        Envelope::Window,
        Some(alpha_x.m),
        e0,
        eta0,
        floor,
    );
    let mut argmax = vec![];
    for snap in field.snapshots.iter().filter(|s| s.t >= 5.0 - 1e-9 && s.t <= 20.0 + 1e-9) {
        let i = (0..g.n).max_by(|&a, &b| snap.alpha.a_x[a].abs().total_cmp(&snap.alpha.a_x[b].abs())).unwrap();
        let x = xs[i];
        let distance = (x - snap.t).abs().min((x + snap.t).abs());
        let bound = 2.0 * (m_data * snap.t).sqrt();
        argmax.push(ArgmaxCheck { t: snap.t, x, distance, bound, pass: distance <= bound });
    }
    let pass = v.pass && alpha.pass && alpha_x.pass && alpha_t.pass && !argmax.is_empty() && argmax.iter().all(|a| a.pass);
    Ok(PointwiseReport { e0, v, alpha, alpha_x, alpha_t, argmax, pass })
}

// ---------------------------------------------------------------------------
// damping

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DampingReport {
    pub k: usize,
    pub theta: f64,
    /// Smallest C with lhs ≤ C·rhs at every step.
    pub constant: f64,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub finite: bool,
}

/// ‖v‖²_{H^K}(t) against e^{−θt}‖v0‖²_{H^K} + ∫₀ᵗ e^{−θ(t−s)}(‖v‖²_{L²} +
/// ‖(α̃_t, α̃_x)‖²_{H^K})ds, θ = η₀.
pub fn damping_check(field: &PhaseField, k: usize, eta0: f64) -> Result<DampingReport> {
    if !(1..=2).contains(&k) {
        return Err(invalid("damping check supports K = 1, 2"));
    }
    let st = &field.steps;
    if st.is_empty() {
        return Err(invalid("empty field"));
    }
    let v0 = st[0].v_hk[k];
    let mut integral = 0.0;
    let (mut lhs, mut rhs, mut times) = (vec![], vec![], vec![]);
    let mut prev: Option<(f64, f64)> = None;
    let mut constant = 0.0f64;
    for s in st {
        let gval = s.v_hk[0] + s.a_hk[k];
        if let Some((tp, gp)) = prev {
            let d = s.t - tp;
            let decay = (-eta0 * d).exp();
            integral = decay * integral + 0.5 * d * (decay * gp + gval);
        }
        prev = Some((s.t, gval));
        let r = (-eta0 * s.t).exp() * v0 + integral;
        let l = s.v_hk[k];
        if r > 0.0 {
            constant = constant.max(l / r);
        } else if l > 0.0 {
            constant = f64::INFINITY;
        }
        times.push(s.t);
        lhs.push(l);
        rhs.push(r);
    }
    Ok(DampingReport { k, theta: eta0, constant, times, lhs, rhs, finite: constant.is_finite() })
}

/// Relative change of the damping constant between two resolutions.
pub fn damping_stability(a: &DampingReport, b: &DampingReport) -> f64 {
    if a.constant == 0.0 && b.constant == 0.0 {
        return 0.0;
    }
    (a.constant - b.constant).abs() / a.constant.max(b.constant)
}

//! The five pipeline stages. Each turns its inputs into verification rows
//! plus named CSV/JSON artifacts; persistence and caching live in
//! [`crate::pipeline`].

use std::fmt;
use std::str::FromStr;

use frontstab_core::green::*;
use frontstab_core::model::ReactionSystem;
use frontstab_core::nonlinear::*;
use frontstab_core::numerics::Grid1D;
use frontstab_core::profile::{bistable_exact, solve_profile, FrontProfile, ProfileOptions};
use frontstab_core::resolvent::*;
use frontstab_core::spectral::*;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Profile,
    Spectral,
    Resolvent,
    Green,
    Nonlinear,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Profile, Stage::Spectral, Stage::Resolvent, Stage::Green, Stage::Nonlinear];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Profile => "profile",
            Stage::Spectral => "spectral",
            Stage::Resolvent => "resolvent",
            Stage::Green => "green",
            Stage::Nonlinear => "nonlinear",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Profile => &[],
            Stage::Spectral => &[Stage::Profile],
            _ => &[Stage::Profile, Stage::Spectral],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "profile" => Ok(Stage::Profile),
            "spectral" | "spectrum" => Ok(Stage::Spectral),
            "resolvent" => Ok(Stage::Resolvent),
            "green" => Ok(Stage::Green),
            "nonlinear" => Ok(Stage::Nonlinear),
            other => Err(format!("unknown stage '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// value < limit
    Below,
    /// value ≤ limit
    AtMost,
    /// value ≥ limit
    AtLeast,
    /// value > limit
    Above,
    /// decided by the producing check (limit is informational)
    Reported,
}

impl Rule {
    pub fn symbol(self) -> &'static str {
        match self {
            Rule::Below => "<",
            Rule::AtMost => "<=",
            Rule::AtLeast => ">=",
            Rule::Above => ">",
            Rule::Reported => "~",
        }
    }
}

/// One verification row. Non-finite values are stored as `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stage: Stage,
    pub name: String,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub rule: Rule,
    pub pass: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Check {
    pub fn new(stage: Stage, name: impl Into<String>, value: f64, rule: Rule, limit: f64) -> Self {
        let pass = value.is_finite()
            && match rule {
                Rule::Below => value < limit,
                Rule::AtMost => value <= limit,
                Rule::AtLeast => value >= limit,
                Rule::Above => value > limit,
                Rule::Reported => true,
            };
        Self { stage, name: name.into(), value: finite(value), limit: finite(limit), rule, pass }
    }

    pub fn reported(stage: Stage, name: impl Into<String>, value: f64, limit: f64, pass: bool) -> Self {
        Self { stage, name: name.into(), value: finite(value), limit: finite(limit), rule: Rule::Reported, pass }
    }
}

/// A named artifact held in memory until the pipeline writes it.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct StageOutput {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl StageOutput {
    fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let bytes = serde_json::to_vec_pretty(v).expect("serializable");
        self.artifacts.push(Artifact { name: name.into(), bytes });
    }

    fn csv(&mut self, name: &str, t: Table) {
        self.artifacts.push(Artifact { name: name.into(), bytes: t.finish() });
    }
}

/// Row-oriented CSV builder; floats use the shortest round-trip form.
struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(header).expect("in-memory write");
        Self(w)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.0.write_record(cells.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

type CoreResult<T> = frontstab_core::Result<T>;

// ---------------------------------------------------------------------------
// profile

pub fn profile_stage(cfg: &RunConfig, sys: &ReactionSystem) -> CoreResult<(FrontProfile, StageOutput)> {
    let pc = &cfg.profile;
    let grid = Grid1D::symmetric(pc.half_width, pc.nodes)?;
    let p = solve_profile(sys, grid, ProfileOptions { tol: pc.tol, anchor: pc.anchor, ..Default::default() })?;
    let mut out = StageOutput::default();
    let s = Stage::Profile;
    out.checks.push(Check::new(s, "residual_sup", p.residual_sup, Rule::AtMost, pc.tol));
    let balanced = cfg.system.name == "bistable" && cfg.system.a.map_or(true, |a| a == 0.5) && pc.anchor == 0.0;
    let xs = grid.nodes();
    if balanced {
        let err = xs.iter().zip(&p.u_bar).map(|(&x, u)| (u - bistable_exact(x)).abs()).fold(0.0, f64::max);
        out.checks.push(Check::new(s, "closed_form_linf", err, Rule::Below, pc.closed_form_tol));
    }
    if sys.n == 1 {
        for (name, rate, end) in [("tail_rate_minus", p.tail_rate_minus, &p.u_minus), ("tail_rate_plus", p.tail_rate_plus, &p.u_plus)] {
            let want = (-sys.df1(end[0])).sqrt();
            out.checks.push(Check::new(s, format!("{name}_rel_error"), (rate - want).abs() / want, Rule::Below, pc.tail_rate_tol));
        }
    }
    let mut t = Table::new(&["x", "u_bar", "u_bar_prime", "closed_form"]);
    for (i, &x) in xs.iter().enumerate() {
        t.row([f(x), f(p.u_bar[i]), f(p.u_bar_prime[i]), if balanced { f(bistable_exact(x)) } else { String::new() }]);
    }
    out.csv("profile.csv", t);
    out.json("profile.json", &p);
    Ok((p, out))
}

// ---------------------------------------------------------------------------
// spectral

pub fn spectral_options(cfg: &RunConfig) -> SpectralOptions {
    let s = &cfg.spectral;
    SpectralOptions { tol: s.tol, eta0_factor: s.eta0_factor, count: s.count, ..Default::default() }
}

pub fn spectral_stage(cfg: &RunConfig, sys: &ReactionSystem, p: &FrontProfile) -> CoreResult<(SpectralData, StageOutput)> {
    let op = assemble_linearization(sys, p, StencilOrder::Fourth);
    let sd = check_spectral_assumption(&op, sys, p, spectral_options(cfg))?;
    let sc = &cfg.spectral;
    let s = Stage::Spectral;
    let mut out = StageOutput::default();
    out.checks.push(Check::new(s, "zero_eigenvalue_abs", sd.zero_eig.norm(), Rule::Below, sc.tol));
    out.checks.push(Check::new(s, "zero_mode_cosine", sd.zero_mode_cosine, Rule::Above, sc.min_cosine));
    out.checks.push(Check::new(s, "gap_eta", sd.eta, Rule::Above, sc.min_gap));
    out.checks.push(Check::new(s, "biorthogonality", sd.biorthogonality, Rule::Below, sc.biorthogonality_tol));
    out.checks.push(Check::new(s, "eta0", sd.eta0, Rule::Below, (sd.eta / 4.0).min(sd.eta_prime)));
    let mut t = Table::new(&["index", "re", "im", "kind", "participation"]);
    for (k, ev) in sd.eigenvalues.iter().enumerate() {
        t.row([k.to_string(), f(ev.re), f(ev.im), format!("{:?}", sd.kinds[k]), f(sd.participation[k])]);
    }
    out.csv("spectrum.csv", t);
    let mut t = Table::new(&["x", "phi", "psi_tilde"]);
    for (i, x) in p.grid.nodes().into_iter().enumerate() {
        t.row([f(x), f(sd.phi[i]), f(sd.psi_tilde[i])]);
    }
    out.csv("modes.csv", t);
    out.json("spectral.json", &sd);
    Ok((sd, out))
}

// ---------------------------------------------------------------------------
// resolvent

pub fn contour_spec(cfg: &RunConfig, eta: f64) -> CoreResult<ContourSpec> {
    let c = &cfg.contour;
    let mut spec = ContourSpec::with_kappa(eta, c.kappa.unwrap_or(eta / 4.0), c.t_min)?;
    spec.tol = c.tol;
    spec.order = c.order;
    spec.max_depth = c.max_depth;
    spec.conjugate = c.conjugate;
    Ok(spec)
}

/// `count` contour nodes with |λ| ≤ `max_modulus`, evenly spread over them.
pub fn contour_sample(spec: &ContourSpec, count: usize, max_modulus: f64) -> Vec<C> {
    let near: Vec<C> = spec.nodes().into_iter().map(|(l, _)| l).filter(|l| l.norm() <= max_modulus).collect();
    if near.len() <= count {
        return near;
    }
    (0..count).map(|k| near[k * (near.len() - 1) / (count - 1).max(1)]).collect()
}

fn flat_profile(half: f64, n: usize) -> CoreResult<FrontProfile> {
    Ok(FrontProfile::uniform(Grid1D::symmetric(half, n)?, vec![0.0]))
}

pub fn resolvent_stage(cfg: &RunConfig, sys: &ReactionSystem, p: &FrontProfile, sd: &SpectralData) -> CoreResult<StageOutput> {
    let rc = &cfg.resolvent;
    let s = Stage::Resolvent;
    let mut out = StageOutput::default();
    let spec = contour_spec(cfg, sd.eta)?;
    let lams = contour_sample(&spec, rc.direct_points, rc.max_modulus);
    let g = &p.grid;
    let ys: Vec<usize> = rc.ys.iter().map(|&y| g.nearest(y)).collect();
    // compare away from the Dirichlet ends, where the direct solve is truncated
    let inner = |x: f64| x.abs() <= 0.7 * g.x_max.min(-g.x_min);
    let rows = cfg.execution.map(&lams, |&lam| -> CoreResult<Vec<(usize, f64, f64, f64)>> {
        let (m, a) = resolvent_at(sys, p, lam, ModeOptions::default())?;
        let mut v = vec![];
        for &iy in &ys {
            let d = &resolvent_direct_richardson(sys, p, lam, iy)?[0];
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for ix in (0..g.n).step_by(7).filter(|&i| inner(g.node(i))) {
                num = num.max((a.kernel(&m, ix, iy) - d[ix]).norm());
                den = den.max(d[ix].norm());
            }
            v.push((iy, num / den, a.jump_residual(&m, iy), m.duality_deviation()));
        }
        Ok(v)
    });
    let mut t = Table::new(&["lambda_re", "lambda_im", "y", "direct_rel_error", "jump_residual", "duality_deviation"]);
    let (mut worst_direct, mut worst_jump) = (0.0f64, 0.0f64);
    for (lam, r) in lams.iter().zip(rows) {
        for (iy, dr, jr, dd) in r? {
            worst_direct = worst_direct.max(dr);
            worst_jump = worst_jump.max(jr);
            t.row([f(lam.re), f(lam.im), f(g.node(iy)), f(dr), f(jr), f(dd)]);
        }
    }
    out.csv("resolvent_checks.csv", t);
    out.checks.push(Check::new(s, "contour_points", lams.len() as f64, Rule::AtLeast, rc.direct_points as f64));
    out.checks.push(Check::new(s, "modes_vs_direct_rel", worst_direct, Rule::Below, rc.direct_tol));
    out.checks.push(Check::new(s, "jump_residual", worst_jump, Rule::Below, rc.jump_tol));

    // f = −u on a flat state: (λ − L)⁻¹ has kernel e^{−k|x−y|}/(2k), k = √(λ+1)
    let lin = ReactionSystem::linear(1.0);
    let fp = flat_profile(15.0, 1501)?;
    let fg = &fp.grid;
    let mut cc = 0.0f64;
    let mut t = Table::new(&["lambda_re", "lambda_im", "x", "y", "re", "im", "exact_re", "exact_im"]);
    for lam in lams.iter().copied().chain([C::new(0.0, 0.0), C::new(2.0, -1.0)]) {
        let (m, a) = resolvent_at(&lin, &fp, lam, ModeOptions::default())?;
        let k = (lam + 1.0).sqrt();
        for &(x, y) in &[(0.0, 0.0), (1.0, -1.0), (-3.0, 2.0), (4.0, 3.5), (-0.5, 0.25)] {
            let (ix, iy) = (fg.nearest(x), fg.nearest(y));
            let got = -a.kernel(&m, ix, iy);
            let want = (-k * (fg.node(ix) - fg.node(iy)).abs()).exp() / (k * 2.0);
            cc = cc.max((got - want).norm() / want.norm());
            t.row([f(lam.re), f(lam.im), f(fg.node(ix)), f(fg.node(iy)), f(got.re), f(got.im), f(want.re), f(want.im)]);
        }
    }
    out.csv("closed_form.csv", t);
    out.checks.push(Check::new(s, "closed_form_rel", cc, Rule::Below, rc.closed_form_tol));

    let nodes: Vec<usize> = (-10..=10).map(|k| g.nearest(k as f64)).collect();
    let b = verify_resolvent_bound(sys, p, sd, &lams, &nodes, ModeOptions::default(), cfg.execution)?;
    out.checks.push(Check::reported(s, "bounded_frequency_constant", b.c, f64::NAN, b.pass));
    out.json("resolvent_bound.json", &b);
    Ok(out)
}

// ---------------------------------------------------------------------------
// green

/// Heat kernel of u_t = u_xx − u.
fn exact_linear_green(x: f64, t: f64, y: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-(x - y).powi(2) / (4.0 * t) - t).exp()
}

pub fn green_stage(cfg: &RunConfig, sys: &ReactionSystem, p: &FrontProfile, sd: &SpectralData) -> CoreResult<StageOutput> {
    let s = Stage::Green;
    let mut out = StageOutput::default();
    let spec = contour_spec(cfg, sd.eta)?;
    let solver = GreenSolver::new(sys, p, Some(sd), spec.clone(), cfg.execution)?;
    let fit_opts = FitOptions::new(sd.eta0);
    let rep = run_green_checks(&solver, &fit_opts, &cfg.green)?;

    let mut t = Table::new(&[
        "template",
        "quantity",
        "c",
        "c1",
        "c2",
        "c0",
        "m",
        "eta0",
        "sup_ratio",
        "samples",
        "refinement_change",
        "pass",
    ]);
    for fit in &rep.fits {
        let tag = format!("fit:{}:{}", fit.template.name(), fit.quantity);
        out.checks.push(Check::new(s, format!("{tag}:sup_ratio"), fit.sup_ratio, Rule::AtMost, 1.0 + 1e-9));
        out.checks.push(Check::new(s, format!("{tag}:refinement_change"), fit.refinement_change.unwrap_or(f64::NAN), Rule::Below, fit_opts.max_change));
        t.row([
            fit.template.name().to_string(),
            fit.quantity.clone(),
            f(fit.c),
            opt(fit.c1),
            opt(fit.c2),
            opt(fit.c0),
            opt(fit.m),
            f(fit.eta0),
            f(fit.sup_ratio),
            fit.samples.to_string(),
            opt(fit.refinement_change),
            fit.pass.to_string(),
        ]);
    }
    out.csv("bound_fits.csv", t);
    let sc = |name: &str, c: &ScalarCheck| Check::reported(s, name, c.value, c.tolerance, c.pass);
    out.checks.push(sc("invariance_u_bar_prime", &rep.invariance));
    out.checks.push(sc("captured_translation", &rep.captured_translation));
    out.checks.push(sc("semigroup", &rep.semigroup));
    out.checks.push(sc("g_tilde_y_time_exponent", &rep.gy_exponent));
    match &rep.evolve {
        Some(e) => out.checks.push(sc("evolution_oracle_rel", e)),
        None => out.checks.push(Check::reported(s, "evolution_oracle_rel", f64::NAN, f64::NAN, false)),
    }
    out.checks.push(Check::new(s, "gaussian_regime_min_r2", rep.regime.min_r2, Rule::Above, 0.99));
    out.checks.push(Check::new(s, "contour_imag_max", rep.imag_max, Rule::Below, 1e-6));
    let mut t = Table::new(&["t", "y", "slope", "r2", "points"]);
    for l in &rep.regime.lines {
        t.row([f(l.t), f(l.y), f(l.slope), f(l.r2), l.points.to_string()]);
    }
    out.csv("regime.csv", t);

    // constant coefficients: exact heat kernel
    let lin = ReactionSystem::linear(1.0);
    let fp = flat_profile(15.0, 1501)?;
    let mut lspec = ContourSpec::new(1.0, spec.t_min)?;
    lspec.conjugate = spec.conjugate;
    lspec.tol = spec.tol;
    let lsolver = GreenSolver::new(&lin, &fp, None, lspec, cfg.execution)?;
    let fg = &fp.grid;
    let xs: Vec<usize> = [-2.0, 0.0, 1.0, 3.0].iter().map(|&x| fg.nearest(x)).collect();
    let ys: Vec<usize> = [-1.0, 0.0, 0.5].iter().map(|&y| fg.nearest(y)).collect();
    let ts = [0.5, 1.0, 2.0, 5.0];
    let mut probes = ProbeSet::default();
    for &ix in &xs {
        for &iy in &ys {
            probes.add(ix, iy, Deriv::Value);
        }
    }
    let res = lsolver.evaluate(&probes, &ts)?;
    let mut worst = 0.0f64;
    for (it, &tt) in ts.iter().enumerate() {
        let peak = exact_linear_green(0.0, tt, 0.0);
        for &ix in &xs {
            for &iy in &ys {
                let e = (res.at(ix, iy, Deriv::Value, it) - exact_linear_green(fg.node(ix), tt, fg.node(iy))).abs();
                worst = worst.max(e / peak);
            }
        }
    }
    out.checks.push(Check::new(s, "constant_coefficient_rel", worst, Rule::Below, cfg.contour.exact_tol));

    // (x, t, y) tensor for plotting, with ratios to the fitted templates
    let box_nodes: Vec<usize> = (-16..=16).map(|k| p.grid.nearest(0.5 * k as f64)).collect();
    let (fields, _) = sample_fields(&solver, &box_nodes, &[0.5, 1.0, 2.0, 5.0], &box_nodes, &[Deriv::Value])?;
    let field = &fields[0];
    let fit_of = |id: TemplateId| rep.fits.iter().find(|x| x.template == id);
    let (fg_t, fh_t) = (fit_of(TemplateId::TildeG), fit_of(TemplateId::TildeH));
    let ratio = |fit: Option<&BoundFit>, bs: &BoundSample| fit.map(|fit| bs.q / template_value(fit, bs)).unwrap_or(f64::NAN);
    let mut t = Table::new(&["x", "t", "y", "G", "E", "G_tilde", "F", "H_tilde", "ratio_tilde_G", "ratio_tilde_H"]);
    for k in 0..field.len() {
        let (x, tt, y) = field.coords(k);
        let bg = BoundSample { x, t: tt, y, q: field.g_tilde[k].abs() };
        let bh = BoundSample { q: field.h_tilde[k].abs(), ..bg };
        t.row([
            f(x),
            f(tt),
            f(y),
            f(field.g[k]),
            f(field.e[k]),
            f(field.g_tilde[k]),
            f(field.f[k]),
            f(field.h_tilde[k]),
            f(ratio(fg_t, &bg)),
            f(ratio(fh_t, &bh)),
        ]);
    }
    out.csv("green_field.csv", t);
    out.json("green_report.json", &rep);

    let lc = &cfg.lp;
    let lcfg = LpCheckConfig { times: lc.times.clone(), dt: lc.dt, x_stride: lc.x_stride, seed: cfg.seed, min_rate_factor: lc.min_rate_factor };
    let lp = lp_kernel_checks(sys, p, sd, sd.eta0, &lcfg)?;
    let mut t = Table::new(&["function", "kernel", "p", "rate", "template_rate", "pass"]);
    let mut tn = Table::new(&["function", "kernel", "p", "t", "norm"]);
    for r in &lp.rates {
        let pn = if r.p.is_infinite() { "inf".to_string() } else { f(r.p) };
        out.checks.push(Check::new(s, format!("lp:{}:{}:p={pn}", r.kernel, r.function), r.rate, Rule::AtLeast, lc.min_rate_factor * r.template_rate));
        t.row([r.function.clone(), r.kernel.clone(), pn.clone(), f(r.rate), f(r.template_rate), r.pass.to_string()]);
        for (tt, n) in lp.times.iter().zip(&r.norms) {
            tn.row([r.function.clone(), r.kernel.clone(), pn.clone(), f(*tt), f(*n)]);
        }
    }
    out.checks.push(Check::new(s, "lp:translation_residual", lp.translation_residual, Rule::Below, 1e-3));
    out.checks.push(Check::new(s, "lp:zero_input_output", lp.zero_input_output, Rule::AtMost, 0.0));
    out.csv("lp_rates.csv", t);
    out.csv("lp_norms.csv", tn);
    out.json("lp_report.json", &lp);
    Ok(out)
}

// ---------------------------------------------------------------------------
// nonlinear

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearSummary {
    pub eta0: f64,
    pub eta: f64,
    pub sech: OrbitalDecayReport,
    pub sech_gauge: GaugeReport,
    pub scaling: ScalingReport,
    pub quadratic: Option<QuadraticReport>,
    pub translation: TranslationReport,
    pub gaussian: PointwiseReport,
    pub gaussian_refined: Option<PointwiseReport>,
    pub damping_constants: Vec<(usize, f64)>,
}

fn phase_table(run: &NonlinearRun) -> Table {
    let ph = &run.phase;
    let mut t = Table::new(&["t", "alpha", "alpha_dot", "orbital_l2", "orbital_linf", "zeta"]);
    for k in 0..ph.times.len() {
        t.row([f(ph.times[k]), f(ph.alpha[k]), f(ph.alpha_dot[k]), f(ph.orbital[k][0]), f(ph.orbital[k][1]), f(ph.zeta[k])]);
    }
    t
}

fn rel_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn nonlinear_stage(cfg: &RunConfig, sys: &ReactionSystem, p: &FrontProfile, sd: &SpectralData) -> CoreResult<StageOutput> {
    let nc = &cfg.nonlinear;
    let o = &nc.run;
    let (eta0, eta) = (sd.eta0, sd.eta);
    let s = Stage::Nonlinear;
    let mut out = StageOutput::default();
    let run = |pert: &Perturbation, opts: &NonlinearOptions, field: bool| run_experiment(sys, p, sd, eta0, pert, opts, field);

    let sech = Perturbation::Sech { amplitude: nc.sech_amplitude };
    let full = run(&sech, o, true)?;
    let half = run(&sech.scaled(0.5), o, true)?;
    let decay = verify_orbital_decay(&full, eta0, eta);
    let rc = |name: &str, r: &RateCheck| Check::reported(s, name, r.rate.unwrap_or(f64::NAN), r.threshold, r.pass);
    out.checks.push(rc("sech:orbital_rate_l2", &decay.rate_l2));
    out.checks.push(rc("sech:orbital_rate_linf", &decay.rate_linf));
    out.checks.push(rc("sech:alpha_tail_rate", &decay.alpha_tail));
    out.checks.push(Check::new(s, "sech:alpha_dot_mismatch", decay.alpha_dot_mismatch, Rule::Below, 1e-2));
    let gauge = gauge_consistency(&full, o.fit_from, 0.05, 1e-4);
    out.checks.push(Check::reported(s, "sech:gauge_excess", gauge.worst_excess, 0.0, gauge.pass));
    let scaling = zeta_scaling(&full, &half, nc.scaling_tol);
    out.checks.push(Check::new(s, "sech:zeta_halving_deviation", (scaling.ratio / 2.0 - 1.0).abs(), Rule::AtMost, nc.scaling_tol));
    let quadratic = match (&full.field, &half.field) {
        (Some(a), Some(b)) => {
            let q = quadratic_stability(a, b, o.noise_floor, nc.refinement_tol);
            out.checks.push(Check::new(s, "sech:quadratic_constant_change", q.max_change, Rule::Below, nc.refinement_tol));
            Some(q)
        }
        _ => None,
    };
    out.csv("phase_sech.csv", phase_table(&full));
    out.csv("phase_sech_half.csv", phase_table(&half));
    drop(half);

    let delta = nc.translate_delta;
    let tr_run = run(&Perturbation::Translate { delta }, o, false)?;
    let translation = translation_oracle(&tr_run, delta);
    out.checks.push(Check::new(s, "translate:alpha_inf_rel_error", translation.relative_error, Rule::AtMost, 0.05));
    out.checks.push(Check::new(s, "translate:final_residual", translation.final_residual, Rule::Below, 1e-6));
    out.csv("phase_translate.csv", phase_table(&tr_run));
    drop(tr_run);

    let gauss = Perturbation::Gaussian { amplitude: nc.gaussian_amplitude, m: nc.gaussian_m };
    let g_run = run(&gauss, o, true)?;
    let pw = verify_pointwise_gaussian(&g_run, nc.gaussian_m, eta0)?;
    for e in [&pw.v, &pw.alpha, &pw.alpha_x, &pw.alpha_t] {
        out.checks.push(Check::reported(s, format!("gaussian:{}:constant", e.quantity), e.c, f64::NAN, e.c.is_finite()));
        out.checks.push(Check::new(s, format!("gaussian:{}:box_change", e.quantity), e.change, Rule::Below, nc.refinement_tol));
    }
    let misses = pw.argmax.iter().filter(|a| !a.pass).count();
    out.checks.push(Check::new(s, "gaussian:argmax_alpha_x_misses", misses as f64, Rule::AtMost, 0.0));
    out.checks.push(Check::new(s, "gaussian:argmax_samples", pw.argmax.len() as f64, Rule::AtLeast, 1.0));
    let mut damping_constants = vec![];
    if let Some(field) = &g_run.field {
        for k in [1, 2] {
            let d = damping_check(field, k, eta0)?;
            out.checks.push(Check::reported(s, format!("gaussian:damping_K{k}"), d.constant, f64::NAN, d.finite));
            damping_constants.push((k, d.constant));
        }
        let g = &g_run.trajectory.grid;
        let stride = ((0.25 / g.h()).round() as usize).max(1);
        let mut t = Table::new(&["t", "x", "v", "alpha", "alpha_x", "alpha_t"]);
        for snap in &field.snapshots {
            for i in (0..g.n).step_by(stride).filter(|&i| g.node(i).abs() <= 20.0) {
                t.row([f(snap.t), f(g.node(i)), f(snap.v[i]), f(snap.alpha.a[i]), f(snap.alpha.a_x[i]), f(snap.alpha.a_t[i])]);
            }
        }
        out.csv("gaussian_field.csv", t);
    }
    out.csv("phase_gaussian.csv", phase_table(&g_run));
    drop(g_run);
    let gaussian_refined = if nc.refine {
        let fine = NonlinearOptions { dt: o.dt / 2.0, phase_stride: 2 * o.phase_stride, ..o.clone() };
        let r = run(&gauss, &fine, true)?;
        let pr = verify_pointwise_gaussian(&r, nc.gaussian_m, eta0)?;
        for (a, b) in [(&pw.v, &pr.v), (&pw.alpha, &pr.alpha), (&pw.alpha_x, &pr.alpha_x), (&pw.alpha_t, &pr.alpha_t)] {
            out.checks.push(Check::new(s, format!("gaussian:{}:dt_refinement_change", a.quantity), rel_change(a.c, b.c), Rule::Below, nc.refinement_tol));
        }
        Some(pr)
    } else {
        None
    };
    let mut t = Table::new(&["quantity", "c", "m", "c_enlarged", "change", "pass"]);
    for e in [&pw.v, &pw.alpha, &pw.alpha_x, &pw.alpha_t] {
        t.row([e.quantity.clone(), f(e.c), f(e.m), f(e.c_enlarged), f(e.change), e.pass.to_string()]);
    }
    out.csv("envelopes.csv", t);
    let mut t = Table::new(&["t", "x", "distance", "bound", "pass"]);
    for a in &pw.argmax {
        t.row([f(a.t), f(a.x), f(a.distance), f(a.bound), a.pass.to_string()]);
    }
    out.csv("argmax.csv", t);
    let summary = NonlinearSummary {
        eta0,
        eta,
        sech: decay,
        sech_gauge: gauge,
        scaling,
        quadratic,
        translation,
        gaussian: pw,
        gaussian_refined,
        damping_constants,
    };
    out.json("nonlinear_report.json", &summary);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("spectrum".parse::<Stage>().unwrap(), Stage::Spectral);
        assert!("greens".parse::<Stage>().is_err());
        assert_eq!(Stage::Green.deps(), &[Stage::Profile, Stage::Spectral]);
    }

    #[test]
    fn checks_apply_their_rule() {
        let s = Stage::Profile;
        assert!(Check::new(s, "a", 1.0, Rule::Below, 2.0).pass);
        assert!(!Check::new(s, "a", 2.0, Rule::Below, 2.0).pass);
        assert!(Check::new(s, "a", 2.0, Rule::AtMost, 2.0).pass);
        assert!(Check::new(s, "a", 2.0, Rule::AtLeast, 2.0).pass);
        assert!(!Check::new(s, "a", 2.0, Rule::Above, 2.0).pass);
        let n = Check::new(s, "a", f64::NAN, Rule::AtMost, 2.0);
        assert!(!n.pass && n.value.is_none());
    }

    #[test]
    fn contour_sample_spreads_over_nearby_nodes() {
        let spec = ContourSpec::new(0.375, 0.1).unwrap();
        let l = contour_sample(&spec, 5, 4.0);
        assert_eq!(l.len(), 5);
        assert!(l.iter().all(|z| z.norm() <= 4.0));
        assert!(l.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn linear_heat_kernel_has_unit_mass_times_decay() {
        let (t, h) = (0.7, 0.01);
        let mass: f64 = (-2000..=2000).map(|k| exact_linear_green(k as f64 * h, t, 0.0) * h).sum();
        assert!((mass - (-t).exp()).abs() < 1e-10);
    }
}

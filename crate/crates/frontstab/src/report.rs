//! Human-readable summary and plotting scripts for a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::pipeline::{Manifest, PipelineError};
use crate::stages::{Check, Stage};

/// Columns of the fitted-constant table; these are the `BoundFit` field
/// names, in declaration order.
pub const BOUND_FIT_COLUMNS: [&str; 12] =
    ["template", "quantity", "c", "c1", "c2", "c0", "m", "eta0", "sup_ratio", "samples", "refinement_change", "pass"];

const PLOTS: [(&str, &str); 4] = [
    ("green_heatmap.py", GREEN_HEATMAP),
    ("ratio_maps.py", RATIO_MAPS),
    ("alpha.py", ALPHA),
    ("norm_decay.py", NORM_DECAY),
];

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
        None => "n/a".into(),
    }
}

fn row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn header(out: &mut String, cols: &[&str]) {
    row(out, &cols.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    row(out, &vec!["---".to_string(); cols.len()]);
}

fn check_cells(c: &Check) -> Vec<String> {
    vec![
        c.stage.name().into(),
        c.name.clone(),
        num(c.value),
        format!("{} {}", c.rule.symbol(), num(c.limit)),
        if c.pass { "PASS" } else { "FAIL" }.into(),
    ]
}

fn read_csv(path: &Path) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let head = r.headers().ok()?.iter().map(String::from).collect();
    let rows = r.records().filter_map(|x| x.ok()).map(|x| x.iter().map(String::from).collect()).collect();
    Some((head, rows))
}

/// Write `report.md` and `plots/*.py` into the run directory. Missing
/// artifacts are listed as gaps; the report is produced regardless.
pub fn emit_report(manifest: &Manifest, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    let gaps = manifest.verify_files(dir);
    let mut md = String::new();
    let _ = writeln!(md, "# frontstab run report\n");
    let _ = writeln!(md, "- software version: {}", manifest.software_version);
    let _ = writeln!(md, "- config hash: `{}`", manifest.config_hash);
    let _ = writeln!(md, "- manifest hash: `{}`", manifest.manifest_hash);
    let _ = writeln!(md, "- seed: {}", manifest.seed);
    let total = manifest.checks().count();
    let failed = manifest.checks().filter(|c| !c.pass).count();
    let _ = writeln!(md, "- verifications: {} run, {} failed\n", total, failed);

    let _ = writeln!(md, "## Pass/fail matrix\n");
    header(&mut md, &["stage", "check", "value", "limit", "result"]);
    for s in Stage::ALL {
        match manifest.stage(s) {
            None => row(&mut md, &[s.name().into(), "-".into(), "-".into(), "-".into(), "not run".into()]),
            Some(sum) => {
                if let Some(e) = &sum.error {
                    row(&mut md, &[s.name().into(), "stage error".into(), e.replace('|', "/"), "-".into(), "FAIL".into()]);
                }
                for c in &sum.checks {
                    row(&mut md, &check_cells(c));
                }
            }
        }
    }

    let _ = writeln!(md, "\n## Fitted constants\n");
    match read_csv(&dir.join("green").join("bound_fits.csv")) {
        Some((_, rows)) => {
            header(&mut md, &BOUND_FIT_COLUMNS);
            for r in rows {
                row(&mut md, &r);
            }
        }
        None => {
            header(&mut md, &BOUND_FIT_COLUMNS);
            let mut cells = vec!["not run".to_string()];
            cells.resize(BOUND_FIT_COLUMNS.len(), "-".into());
            row(&mut md, &cells);
        }
    }

    let _ = writeln!(md, "\n## Decay rates\n");
    let (eta0, eta) = spectral_rates(dir);
    let _ = writeln!(md, "η₀ = {}, η = {}\n", num(eta0), num(eta));
    header(&mut md, &["source", "quantity", "rate", "rate / η₀", "rate / η", "result"]);
    let ratio = |r: Option<f64>, d: Option<f64>| match (r, d) {
        (Some(r), Some(d)) if d != 0.0 => num(Some(r / d)),
        _ => "n/a".into(),
    };
    let mut any = false;
    for c in manifest.checks().filter(|c| c.name.contains("rate") && !c.name.contains("rel_error")) {
        any = true;
        row(
            &mut md,
            &[c.stage.name().into(), c.name.clone(), num(c.value), ratio(c.value, eta0), ratio(c.value, eta), if c.pass { "PASS" } else { "FAIL" }.into()],
        );
    }
    if !any {
        row(&mut md, &["-".into(), "-".into(), "-".into(), "-".into(), "-".into(), "not run".into()]);
    }

    let _ = writeln!(md, "\n## Gaps\n");
    if gaps.is_empty() {
        let _ = writeln!(md, "none");
    }
    for g in &gaps {
        let _ = writeln!(md, "- missing or modified: `{g}`");
    }
    let _ = writeln!(md, "\n## Plots\n");
    let _ = writeln!(md, "Run from the run directory, e.g. `python3 plots/green_heatmap.py` (needs numpy, pandas, matplotlib).");

    let mut written = vec![];
    let path = dir.join("report.md");
    fs::write(&path, md).map_err(io(&path))?;
    written.push(path);
    let pdir = dir.join("plots");
    fs::create_dir_all(&pdir).map_err(io(&pdir))?;
    for (name, body) in PLOTS {
        let path = pdir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn spectral_rates(dir: &Path) -> (Option<f64>, Option<f64>) {
    let v: Option<serde_json::Value> =
        fs::read(dir.join("spectral").join("spectral.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    let get = |k: &str| v.as_ref().and_then(|v| v.get(k)).and_then(|x| x.as_f64());
    (get("eta0"), get("eta"))
}

const GREEN_HEATMAP: &str = r#"# log10 |G~(x,t;y)| on the sampled box, one panel per time.
import numpy as np, pandas as pd, matplotlib.pyplot as plt
d = pd.read_csv("green/green_field.csv")
ts = sorted(d.t.unique())
fig, axes = plt.subplots(1, len(ts), figsize=(4 * len(ts), 3.6), squeeze=False)
for ax, t in zip(axes[0], ts):
    s = d[d.t == t].pivot(index="x", columns="y", values="G_tilde")
    im = ax.pcolormesh(s.columns, s.index, np.log10(np.abs(s.values) + 1e-16), shading="auto")
    ax.set_title(f"t = {t}"); ax.set_xlabel("y"); ax.set_ylabel("x")
    fig.colorbar(im, ax=ax)
fig.tight_layout(); fig.savefig("plots/green_heatmap.png", dpi=120)
"#;

const RATIO_MAPS: &str = r#"# |G~| and |H~| divided by their fitted templates (<= 1 everywhere).
import pandas as pd, matplotlib.pyplot as plt
d = pd.read_csv("green/green_field.csv")
ts = sorted(d.t.unique())
for col in ["ratio_tilde_G", "ratio_tilde_H"]:
    fig, axes = plt.subplots(1, len(ts), figsize=(4 * len(ts), 3.6), squeeze=False)
    for ax, t in zip(axes[0], ts):
        s = d[d.t == t].pivot(index="x", columns="y", values=col)
        im = ax.pcolormesh(s.columns, s.index, s.values, shading="auto", vmin=0, vmax=1)
        ax.set_title(f"{col}, t = {t}"); ax.set_xlabel("y"); ax.set_ylabel("x")
        fig.colorbar(im, ax=ax)
    fig.tight_layout(); fig.savefig(f"plots/{col}.png", dpi=120)
"#;

const ALPHA: &str = r#"# Scalar phase alpha(t) for every nonlinear experiment.
import glob, pandas as pd, matplotlib.pyplot as plt
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3.6))
for f in sorted(glob.glob("nonlinear/phase_*.csv")):
    d = pd.read_csv(f); name = f.split("phase_")[1][:-4]
    a.plot(d.t, d.alpha, label=name)
    tail = (d.alpha - d.alpha.iloc[-1]).abs()
    b.semilogy(d.t, tail + 1e-18, label=name)
a.set_xlabel("t"); a.set_ylabel("alpha"); a.legend()
b.set_xlabel("t"); b.set_ylabel("|alpha - alpha_inf|"); b.legend()
fig.tight_layout(); fig.savefig("plots/alpha.png", dpi=120)
"#;

const NORM_DECAY: &str = r#"# Orbital distance |u~ - u_bar(. - alpha)| in L2 and Linf, and Lp kernel norms.
import glob, pandas as pd, matplotlib.pyplot as plt
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3.6))
for f in sorted(glob.glob("nonlinear/phase_*.csv")):
    d = pd.read_csv(f); name = f.split("phase_")[1][:-4]
    a.semilogy(d.t, d.orbital_l2 + 1e-18, label=f"{name} L2")
    a.semilogy(d.t, d.orbital_linf + 1e-18, "--", label=f"{name} Linf")
a.set_xlabel("t"); a.legend(fontsize=7)
try:
    n = pd.read_csv("green/lp_norms.csv")
    for (fn, k, p), g in n.groupby(["function", "kernel", "p"]):
        b.semilogy(g.t, g.norm, label=f"{k} {fn} p={p}")
    b.set_xlabel("t"); b.legend(fontsize=6)
except FileNotFoundError:
    b.set_title("green stage not run")
fig.tight_layout(); fig.savefig("plots/norm_decay.png", dpi=120)
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::pipeline::StageSummary;
    use crate::stages::Rule;

    fn manifest(stages: Vec<StageSummary>) -> Manifest {
        let mut m = Manifest::new(&RunConfig::default());
        m.stages = stages;
        m.manifest_hash = m.compute_hash();
        m
    }

    #[test]
    fn missing_stages_are_marked_not_run() {
        let dir = tempfile::tempdir().unwrap();
        let s = StageSummary {
            stage: Stage::Profile,
            key: "k".into(),
            checks: vec![Check::new(Stage::Profile, "residual_sup", 1e-10, Rule::AtMost, 1e-8)],
            files: vec![],
            error: None,
        };
        let m = manifest(vec![s]);
        emit_report(&m, dir.path()).unwrap();
        let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("| green | - | - | - | not run |"), "{md}");
        assert!(!md.contains("FAIL"));
        assert!(md.contains(&BOUND_FIT_COLUMNS.join(" | ")));
        for (name, _) in PLOTS {
            assert!(dir.path().join("plots").join(name).exists());
        }
    }

    #[test]
    fn gaps_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let s = StageSummary {
            stage: Stage::Profile,
            key: "k".into(),
            checks: vec![],
            files: vec![crate::pipeline::FileEntry { path: "profile/profile.csv".into(), sha256: "00".into(), bytes: 1 }],
            error: None,
        };
        emit_report(&manifest(vec![s]), dir.path()).unwrap();
        let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("missing or modified: `profile/profile.csv`"));
    }
}

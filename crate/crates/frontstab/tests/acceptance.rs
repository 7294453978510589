//! End-to-end acceptance run of the default configuration. Prints one
//! PASS/FAIL line per criterion and fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use frontstab::config::RunConfig;
use frontstab::pipeline::{run_pipeline, FileEntry, Manifest};
use frontstab::stages::{Check, Stage};
use frontstab_core::Execution;

/// Wall-clock limits (seconds) per stage.
const PROFILE_SECONDS: f64 = 5.0;
const SPECTRAL_SECONDS: f64 = 60.0;
const RESOLVENT_SECONDS: f64 = 30.0;
const GREEN_SECONDS: f64 = 300.0;
/// The nonlinear stage performs every run; each run must stay under five
/// minutes, and the stage as a whole is held to that limit.
const NONLINEAR_SECONDS: f64 = 300.0;

/// Which criterion a verification row belongs to.
fn criterion(c: &Check) -> usize {
    let n = c.name.as_str();
    match c.stage {
        Stage::Profile => 1,
        Stage::Spectral => 2,
        Stage::Resolvent => 3,
        Stage::Green if n.starts_with("lp:") => 9,
        Stage::Green if n.starts_with("fit:tilde_H") || n == "gaussian_regime_min_r2" => 6,
        Stage::Green if n.starts_with("fit:") => 5,
        Stage::Green => 4,
        Stage::Nonlinear if n.starts_with("gaussian:") => 8,
        Stage::Nonlinear => 7,
    }
}

struct Verdicts(BTreeMap<usize, Vec<String>>);

impl Verdicts {
    fn fail(&mut self, k: usize, why: String) {
        self.0.entry(k).or_default().push(why);
    }

    fn require(&mut self, k: usize, ok: bool, why: impl FnOnce() -> String) {
        if !ok {
            self.fail(k, why());
        }
    }
}

fn files(m: &Manifest, stages: &[Stage]) -> Vec<FileEntry> {
    stages.iter().flat_map(|s| m.stage(*s).map(|x| x.files.clone()).unwrap_or_default()).collect()
}

fn run(cfg: &RunConfig, stages: &[Stage], dir: &Path) -> Result<Manifest, String> {
    let set: BTreeSet<Stage> = stages.iter().copied().collect();
    run_pipeline(cfg, &set, dir, &mut ()).map_err(|e| e.to_string())
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let cfg = RunConfig::default();
    let mut v = Verdicts(BTreeMap::new());
    let mut counts = BTreeMap::<usize, usize>::new();

    let first = match run(&cfg, &Stage::ALL, &a) {
        Ok(m) => m,
        Err(e) => {
            for k in 1..=10 {
                println!("criterion {k:>2}: FAIL (pipeline error: {e})");
            }
            std::process::exit(1);
        }
    };

    // 1–9: every verification row, plus runtime limits.
    for c in first.checks() {
        let k = criterion(c);
        *counts.entry(k).or_default() += 1;
        v.require(k, c.pass, || format!("{}/{} = {:?}", c.stage, c.name, c.value));
    }
    for (stage, limit, ks) in [
        (Stage::Profile, PROFILE_SECONDS, &[1][..]),
        (Stage::Spectral, SPECTRAL_SECONDS, &[2]),
        (Stage::Resolvent, RESOLVENT_SECONDS, &[3]),
        (Stage::Green, GREEN_SECONDS, &[4]),
        (Stage::Nonlinear, NONLINEAR_SECONDS, &[7, 8]),
    ] {
        let t = first.timings.get(stage.name()).copied().unwrap_or(f64::INFINITY);
        for &k in ks {
            v.require(k, t < limit, || format!("{stage} took {t:.1}s (limit {limit}s)"));
        }
    }
    for k in 1..=9 {
        v.require(k, counts.get(&k).copied().unwrap_or(0) > 0, || "no verification rows".into());
    }

    // 10: determinism and caching.
    let mut n10 = 0;
    let mut det = |ok: bool, why: &str| {
        n10 += 1;
        v.require(10, ok, || why.to_string())
    };
    let again = run(&cfg, &Stage::ALL, &a).unwrap();
    det(again.cache_hits == Stage::ALL.to_vec(), "rerun recomputed a stage");
    det(again.manifest_hash == first.manifest_hash, "rerun changed the manifest hash");

    fs::remove_dir_all(a.join("nonlinear")).unwrap();
    let regen = run(&cfg, &Stage::ALL, &a).unwrap();
    det(!regen.cache_hits.contains(&Stage::Nonlinear), "deleted stage was not recomputed");
    det(regen.cache_hits.len() == 4, "stages other than the deleted one were recomputed");
    det(regen.manifest_hash == first.manifest_hash, "recomputed nonlinear stage differs");
    det(regen.verify_files(&a).is_empty(), "artifact checksums do not match");

    let mut changed = cfg.clone();
    changed.resolvent.direct_points = 6;
    let m = run(&changed, &Stage::ALL, &a).unwrap();
    let hits: BTreeSet<Stage> = m.cache_hits.iter().copied().collect();
    let expect: BTreeSet<Stage> = Stage::ALL.iter().copied().filter(|s| *s != Stage::Resolvent).collect();
    det(hits == expect, "resolvent-only change invalidated other stages");
    det(m.config_hash != first.config_hash, "config hash ignored a change");

    // a fresh directory, sequential execution, same results
    let b = tmp.path().join("b");
    let seq = RunConfig { execution: Execution::Sequential, output_dir: b.clone(), ..cfg.clone() };
    let early = [Stage::Profile, Stage::Spectral, Stage::Resolvent];
    let m = run(&seq, &early, &b).unwrap();
    det(m.config_hash == first.config_hash, "execution mode or output dir entered the config hash");
    det(files(&m, &early) == files(&first, &early), "fresh sequential run produced different artifacts");
    counts.insert(10, n10);

    for k in 1..=10 {
        match v.0.get(&k) {
            None => println!("criterion {k:>2}: PASS ({} checks)", counts.get(&k).copied().unwrap_or(0)),
            Some(why) => println!("criterion {k:>2}: FAIL ({})", why.join("; ")),
        }
    }
    if !v.0.is_empty() {
        eprintln!("failed criteria: {:?}", v.0.keys().collect::<Vec<_>>());
        std::process::exit(1);
    }
}

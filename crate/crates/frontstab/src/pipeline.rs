//! Staged execution with an on-disk cache.
//!
//! Every stage writes into `<out>/<stage>/` and finishes with `stage.json`
//! recording its cache key, verification rows and file checksums. The key
//! hashes the config sections the stage reads plus the keys of its inputs,
//! so editing one section invalidates exactly the stages downstream of it.
//! A stage is reused when its key matches and every recorded file still has
//! its checksum.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use frontstab_core::profile::FrontProfile;
use frontstab_core::spectral::SpectralData;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hash_json, hex, RunConfig};
use crate::stages::{self, Check, Stage, StageOutput};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
const RECORD: &str = "stage.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String, manifest: Box<Manifest> },
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error: {0}")]
    Config(#[from] crate::config::ConfigError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory, '/'-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Contents of `<stage>/stage.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    /// Wall-clock seconds of the computation that produced the files.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub key: String,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageSummary>,
    /// Seconds per stage; excluded from the manifest hash.
    pub timings: BTreeMap<String, f64>,
    /// Stages reused from disk in this invocation; excluded from the hash.
    pub cache_hits: Vec<Stage>,
    pub manifest_hash: String,
}

#[derive(Serialize)]
struct Hashed<'a> {
    software_version: &'a str,
    config_hash: &'a str,
    seed: u64,
    stages: &'a [StageSummary],
}

impl Manifest {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            software_version: VERSION.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            stages: vec![],
            timings: BTreeMap::new(),
            cache_hits: vec![],
            manifest_hash: String::new(),
        }
    }

    pub fn compute_hash(&self) -> String {
        hash_json(&Hashed {
            software_version: &self.software_version,
            config_hash: &self.config_hash,
            seed: self.seed,
            stages: &self.stages,
        })
    }

    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.stages.iter().flat_map(|s| s.checks.iter())
    }

    pub fn all_pass(&self) -> bool {
        self.stages.iter().all(|s| s.error.is_none()) && self.checks().all(|c| c.pass)
    }

    pub fn stage(&self, s: Stage) -> Option<&StageSummary> {
        self.stages.iter().find(|x| x.stage == s)
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    fn save(&mut self, dir: &Path) -> Result<(), PipelineError> {
        self.manifest_hash = self.compute_hash();
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_vec_pretty(self).expect("serializable")).map_err(io(&path))
    }

    /// Listed files that are missing or whose checksum differs.
    pub fn verify_files(&self, dir: &Path) -> Vec<String> {
        self.stages.iter().flat_map(|s| s.files.iter()).filter(|f| !file_matches(dir, f)).map(|f| f.path.clone()).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn file_matches(dir: &Path, f: &FileEntry) -> bool {
    fs::read(dir.join(&f.path)).map(|b| sha256_hex(&b) == f.sha256).unwrap_or(false)
}

/// The requested stages plus everything they read, in execution order.
pub fn closure(requested: &BTreeSet<Stage>) -> Vec<Stage> {
    let mut all: BTreeSet<Stage> = requested.clone();
    for s in requested {
        all.extend(s.deps());
    }
    all.into_iter().collect()
}

/// Cache key of one stage given the keys of its inputs.
pub fn stage_key(cfg: &RunConfig, stage: Stage, upstream: &BTreeMap<Stage, String>) -> String {
    let c = cfg.canonical();
    let sections = match stage {
        Stage::Profile => serde_json::json!({ "system": c.system, "profile": c.profile }),
        Stage::Spectral => serde_json::json!({ "spectral": c.spectral }),
        Stage::Resolvent => serde_json::json!({ "resolvent": c.resolvent, "contour": c.contour }),
        Stage::Green => serde_json::json!({ "contour": c.contour, "green": c.green, "lp": c.lp, "seed": c.seed }),
        Stage::Nonlinear => serde_json::json!({ "nonlinear": c.nonlinear }),
    };
    let deps: Vec<(&Stage, &String)> = stage.deps().iter().map(|d| (d, &upstream[d])).collect();
    hash_json(&(VERSION, stage, sections, deps))
}

/// Lazily computed or loaded inputs shared between stages.
struct Context<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    sys: frontstab_core::model::ReactionSystem,
    profile: Option<FrontProfile>,
    spectral: Option<SpectralData>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

impl Context<'_> {
    fn profile(&mut self) -> Result<&FrontProfile, String> {
        if self.profile.is_none() {
            self.profile = Some(read_json(&self.dir.join("profile").join("profile.json"))?);
        }
        Ok(self.profile.as_ref().unwrap())
    }

    fn spectral(&mut self) -> Result<&SpectralData, String> {
        if self.spectral.is_none() {
            self.spectral = Some(read_json(&self.dir.join("spectral").join("spectral.json"))?);
        }
        Ok(self.spectral.as_ref().unwrap())
    }

    fn compute(&mut self, stage: Stage) -> Result<StageOutput, String> {
        let cfg = self.cfg;
        let e = |e: frontstab_core::Error| e.to_string();
        match stage {
            Stage::Profile => {
                let (p, out) = stages::profile_stage(cfg, &self.sys).map_err(e)?;
                self.profile = Some(p);
                Ok(out)
            }
            Stage::Spectral => {
                let p = self.profile()?.clone();
                let (sd, out) = stages::spectral_stage(cfg, &self.sys, &p).map_err(e)?;
                self.spectral = Some(sd);
                Ok(out)
            }
            _ => {
                self.profile()?;
                self.spectral()?;
                let (p, sd) = (self.profile.as_ref().unwrap(), self.spectral.as_ref().unwrap());
                match stage {
                    Stage::Resolvent => stages::resolvent_stage(cfg, &self.sys, p, sd),
                    Stage::Green => stages::green_stage(cfg, &self.sys, p, sd),
                    _ => stages::nonlinear_stage(cfg, &self.sys, p, sd),
                }
                .map_err(e)
            }
        }
    }
}

fn cached(dir: &Path, stage: Stage, key: &str) -> Option<StageRecord> {
    let rec: StageRecord = read_json(&dir.join(stage.name()).join(RECORD)).ok()?;
    (rec.key == key && rec.stage == stage && rec.files.iter().all(|f| file_matches(dir, f))).then_some(rec)
}

fn persist(dir: &Path, stage: Stage, key: String, out: StageOutput, seconds: f64) -> Result<StageRecord, PipelineError> {
    let sdir = dir.join(stage.name());
    if sdir.exists() {
        fs::remove_dir_all(&sdir).map_err(io(&sdir))?;
    }
    fs::create_dir_all(&sdir).map_err(io(&sdir))?;
    let mut files = vec![];
    for a in out.artifacts {
        let path = sdir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io(&path))?;
        files.push(FileEntry { path: format!("{}/{}", stage.name(), a.name), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() as u64 });
    }
    let rec = StageRecord { stage, key, checks: out.checks, files, seconds };
    // written last: a stage without its record is never treated as cached
    let path = sdir.join(RECORD);
    fs::write(&path, serde_json::to_vec_pretty(&rec).expect("serializable")).map_err(io(&path))?;
    Ok(rec)
}

/// Observer for progress lines.
pub trait Progress {
    fn stage_done(&mut self, _rec: &StageRecord, _cache_hit: bool) {}
}

impl Progress for () {}

/// Run (or reuse) the requested stages and their inputs, write
/// `<dir>/manifest.json` and return it. On a stage failure the partial
/// manifest (with the failing stage's error) is written and returned inside
/// the error.
pub fn run_pipeline(cfg: &RunConfig, requested: &BTreeSet<Stage>, dir: &Path, progress: &mut dyn Progress) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut ctx = Context { cfg, dir, sys: cfg.system.build()?, profile: None, spectral: None };
    let mut manifest = Manifest::new(cfg);
    let mut keys = BTreeMap::new();
    for stage in closure(requested) {
        let key = stage_key(cfg, stage, &keys);
        keys.insert(stage, key.clone());
        let (rec, hit) = match cached(dir, stage, &key) {
            Some(rec) => (rec, true),
            None => {
                let t0 = Instant::now();
                match ctx.compute(stage) {
                    Ok(out) => (persist(dir, stage, key, out, t0.elapsed().as_secs_f64())?, false),
                    Err(message) => {
                        manifest.stages.push(StageSummary { stage, key, checks: vec![], files: vec![], error: Some(message.clone()) });
                        manifest.save(dir)?;
                        return Err(PipelineError::Stage { stage, message, manifest: Box::new(manifest) });
                    }
                }
            }
        };
        progress.stage_done(&rec, hit);
        manifest.timings.insert(stage.name().into(), rec.seconds);
        if hit {
            manifest.cache_hits.push(stage);
        }
        manifest.stages.push(StageSummary { stage, key: rec.key, checks: rec.checks, files: rec.files, error: None });
    }
    // Stages from earlier invocations that are still valid for this config
    // are listed too, so the manifest describes the whole directory.
    for stage in Stage::ALL {
        if manifest.stage(stage).is_some() {
            continue;
        }
        let key = stage_key(cfg, stage, &keys);
        keys.insert(stage, key.clone());
        if let Some(rec) = cached(dir, stage, &key) {
            manifest.timings.insert(stage.name().into(), rec.seconds);
            manifest.stages.push(StageSummary { stage, key: rec.key, checks: rec.checks, files: rec.files, error: None });
        }
    }
    manifest.stages.sort_by_key(|s| s.stage);
    manifest.save(dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_adds_inputs_in_order() {
        let req: BTreeSet<Stage> = [Stage::Nonlinear].into();
        assert_eq!(closure(&req), vec![Stage::Profile, Stage::Spectral, Stage::Nonlinear]);
        let req: BTreeSet<Stage> = [Stage::Profile].into();
        assert_eq!(closure(&req), vec![Stage::Profile]);
    }

    #[test]
    fn keys_follow_the_sections_each_stage_reads() {
        let a = RunConfig::default();
        let keys = |c: &RunConfig| {
            let mut k = BTreeMap::new();
            for s in Stage::ALL {
                let v = stage_key(c, s, &k);
                k.insert(s, v);
            }
            k
        };
        let ka = keys(&a);
        let mut b = a.clone();
        b.nonlinear.sech_amplitude = 0.02;
        let kb = keys(&b);
        for s in Stage::ALL {
            assert_eq!(ka[&s] == kb[&s], s != Stage::Nonlinear, "{s}");
        }
        let mut c = a.clone();
        c.profile.nodes = 2001;
        let kc = keys(&c);
        assert!(Stage::ALL.iter().all(|s| ka[s] != kc[s]));
        let mut d = a.clone();
        d.seed = 99;
        let kd = keys(&d);
        for s in Stage::ALL {
            assert_eq!(ka[&s] == kd[&s], s != Stage::Green, "{s}");
        }
        let moved = RunConfig { output_dir: "x".into(), ..a.clone() };
        assert_eq!(keys(&moved), ka);
    }

    #[test]
    fn manifest_hash_ignores_timings() {
        let mut m = Manifest::new(&RunConfig::default());
        let h = m.compute_hash();
        m.timings.insert("profile".into(), 1.0);
        m.cache_hits.push(Stage::Profile);
        assert_eq!(m.compute_hash(), h);
        m.seed += 1;
        assert_ne!(m.compute_hash(), h);
    }
}

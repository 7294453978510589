//! Run configuration: TOML sections with typed values, every field
//! defaulted, unknown keys rejected.

use std::path::PathBuf;

use frontstab_core::green::{ConjugateMode, GreenCheckConfig};
use frontstab_core::model::ReactionSystem;
use frontstab_core::nonlinear::NonlinearOptions;
use frontstab_core::Execution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// toml's message carries the line and column.
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    /// Built-in system name.
    pub name: String,
    /// Threshold of the bistable cubic; ½ is the balanced (stationary) case.
    pub a: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { name: "bistable".into(), a: None }
    }
}

impl SystemSection {
    pub fn build(&self) -> Result<ReactionSystem, ConfigError> {
        let sys = ReactionSystem::builtin(&self.name).map_err(|e| bad("system.name", e.to_string()))?;
        match (self.a, self.name.as_str()) {
            (None, _) => Ok(sys),
            (Some(a), "bistable") => Ok(ReactionSystem::bistable_with(a)),
            (Some(_), _) => Err(bad("system.a", "only the bistable system takes a threshold")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub half_width: f64,
    pub nodes: usize,
    pub tol: f64,
    pub anchor: f64,
    /// Required sup error against the closed form (balanced bistable only).
    pub closed_form_tol: f64,
    /// Allowed relative error of the tail rates against 1/√2.
    pub tail_rate_tol: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { half_width: 30.0, nodes: 3001, tol: 1e-8, anchor: 0.0, closed_form_tol: 1e-6, tail_rate_tol: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// η₀ = eta0_factor · min(η/4, η′).
    pub eta0_factor: f64,
    pub tol: f64,
    pub count: usize,
    pub min_gap: f64,
    pub min_cosine: f64,
    pub biorthogonality_tol: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { eta0_factor: 0.9, tol: 1e-6, count: 40, min_gap: 0.3, min_cosine: 0.999, biorthogonality_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventSection {
    /// Contour nodes (|λ| ≤ max_modulus) compared against the direct solve.
    pub direct_points: usize,
    pub max_modulus: f64,
    pub direct_tol: f64,
    pub jump_tol: f64,
    /// Constant-coefficient check f = −u on a flat state.
    pub closed_form_tol: f64,
    /// Source positions y for the jump and direct checks.
    pub ys: Vec<f64>,
}

impl Default for ResolventSection {
    fn default() -> Self {
        Self { direct_points: 5, max_modulus: 4.0, direct_tol: 1e-4, jump_tol: 1e-6, closed_form_tol: 1e-4, ys: vec![-2.0, 0.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourSection {
    /// Height of Γ̃₁; defaults to η/4.
    pub kappa: Option<f64>,
    pub t_min: f64,
    pub tol: f64,
    pub order: usize,
    pub max_depth: u32,
    pub conjugate: ConjugateMode,
    /// Constant-coefficient heat-kernel check.
    pub exact_tol: f64,
}

impl Default for ContourSection {
    fn default() -> Self {
        Self { kappa: None, t_min: 0.1, tol: 1e-8, order: 16, max_depth: 12, conjugate: ConjugateMode::Mirror, exact_tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpSection {
    pub times: Vec<f64>,
    pub dt: f64,
    pub x_stride: usize,
    pub min_rate_factor: f64,
}

impl Default for LpSection {
    fn default() -> Self {
        let d = frontstab_core::green::LpCheckConfig::default();
        Self { times: d.times, dt: d.dt, x_stride: d.x_stride, min_rate_factor: d.min_rate_factor }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearSection {
    pub sech_amplitude: f64,
    pub translate_delta: f64,
    pub gaussian_amplitude: f64,
    pub gaussian_m: f64,
    /// Allowed relative deviation of sup ζ(E0)/sup ζ(E0/2) from 2.
    pub scaling_tol: f64,
    /// Allowed relative change of fitted constants under dt/2.
    pub refinement_tol: f64,
    /// Re-run the Gaussian experiment at dt/2.
    pub refine: bool,
    pub run: NonlinearOptions,
}

impl Default for NonlinearSection {
    fn default() -> Self {
        Self {
            sech_amplitude: 0.01,
            translate_delta: 0.05,
            gaussian_amplitude: 0.005,
            gaussian_m: 8.0,
            scaling_tol: 0.15,
            refinement_tol: 0.1,
            refine: true,
            run: NonlinearOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the randomized test functions.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub execution: Execution,
    pub system: SystemSection,
    pub profile: ProfileSection,
    pub spectral: SpectralSection,
    pub resolvent: ResolventSection,
    pub contour: ContourSection,
    pub green: GreenCheckConfig,
    pub lp: LpSection,
    pub nonlinear: NonlinearSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("frontstab-out"),
            execution: Execution::default(),
            system: SystemSection::default(),
            profile: ProfileSection::default(),
            spectral: SpectralSection::default(),
            resolvent: ResolventSection::default(),
            contour: ContourSection::default(),
            green: GreenCheckConfig::default(),
            lp: LpSection::default(),
            nonlinear: NonlinearSection::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical (JSON) form, hex. Where the artifacts go and
    /// how work is scheduled do not change any result, so the output
    /// directory and execution mode are left out.
    pub fn hash(&self) -> String {
        hash_json(&self.canonical())
    }

    pub fn canonical(&self) -> RunConfig {
        RunConfig { output_dir: PathBuf::new(), execution: Execution::default(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.build()?;
        let p = &self.profile;
        positive("profile.half_width", p.half_width)?;
        positive("profile.tol", p.tol)?;
        positive("profile.closed_form_tol", p.closed_form_tol)?;
        positive("profile.tail_rate_tol", p.tail_rate_tol)?;
        if p.nodes < 64 {
            return Err(bad("profile.nodes", "need at least 64 nodes"));
        }
        let s = &self.spectral;
        if !(s.eta0_factor > 0.0 && s.eta0_factor < 1.0) {
            return Err(bad("spectral.eta0_factor", format!("must lie in (0, 1) so that 0 < η₀ < min(η/4, η′), got {}", s.eta0_factor)));
        }
        positive("spectral.tol", s.tol)?;
        positive("spectral.biorthogonality_tol", s.biorthogonality_tol)?;
        if s.count < 2 {
            return Err(bad("spectral.count", "need at least 2 eigenvalues"));
        }
        let r = &self.resolvent;
        for (k, v) in [
            ("resolvent.max_modulus", r.max_modulus),
            ("resolvent.direct_tol", r.direct_tol),
            ("resolvent.jump_tol", r.jump_tol),
            ("resolvent.closed_form_tol", r.closed_form_tol),
        ] {
            positive(k, v)?;
        }
        if r.direct_points == 0 || r.ys.is_empty() {
            return Err(bad("resolvent.direct_points", "sample set must be nonempty"));
        }
        let c = &self.contour;
        if let Some(k) = c.kappa {
            positive("contour.kappa", k)?;
        }
        positive("contour.t_min", c.t_min)?;
        positive("contour.tol", c.tol)?;
        positive("contour.exact_tol", c.exact_tol)?;
        if c.order < 2 {
            return Err(bad("contour.order", "need at least 2 nodes per panel"));
        }
        self.green.validate().map_err(|e| bad("green", e.to_string()))?;
        if self.green.t_min < c.t_min {
            return Err(bad("green.t_min", "sample times must not precede contour.t_min"));
        }
        if 2.0 * self.green.half_width >= p.half_width {
            return Err(bad("green.half_width", "the doubled sample box must fit inside the profile grid"));
        }
        let l = &self.lp;
        positive("lp.dt", l.dt)?;
        positive("lp.min_rate_factor", l.min_rate_factor)?;
        if l.times.len() < 3 || l.times.iter().any(|&t| t.is_nan() || t <= 0.0) {
            return Err(bad("lp.times", "need at least 3 positive times"));
        }
        let n = &self.nonlinear;
        for (k, v) in [
            ("nonlinear.translate_delta", n.translate_delta.abs()),
            ("nonlinear.gaussian_m", n.gaussian_m),
            ("nonlinear.scaling_tol", n.scaling_tol),
            ("nonlinear.refinement_tol", n.refinement_tol),
        ] {
            positive(k, v)?;
        }
        n.run.validate().map_err(|e| bad("nonlinear.run", e.to_string()))?;
        Ok(())
    }
}

pub fn hash_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("serializable");
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_all_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.system.name, "bistable");
    }

    #[test]
    fn eta0_factor_must_be_below_one() {
        let e = RunConfig::parse("[spectral]\neta0_factor = 1.5\n").unwrap_err();
        match e {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "spectral.eta0_factor"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_and_syntax_errors_carry_positions() {
        let e = RunConfig::parse("[profile]\nnodez = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
        assert!(e.to_string().contains("nodez"), "{e}");
        let e = RunConfig::parse("seed = 1\n[profile\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn round_trip_and_hash() {
        let text = "seed = 11\n[nonlinear]\nsech_amplitude = 0.02\n[nonlinear.run]\nt_end = 70.0\n[contour]\nkappa = 0.1\n";
        let c = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
        let moved = RunConfig { output_dir: "elsewhere".into(), execution: Execution::Sequential, ..c.clone() };
        assert_eq!(moved.hash(), c.hash());
    }

    #[test]
    fn shipped_default_config_matches_the_code() {
        let c = RunConfig::parse(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_system_is_named() {
        let e = RunConfig::parse("[system]\nname = \"fisher\"\n").unwrap_err();
        assert!(e.to_string().contains("system.name"), "{e}");
    }
}

//! Argument handling. Exit codes: 0 every verification passed, 1 some
//! verification failed, 2 usage, configuration or i/o error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::pipeline::{run_pipeline, Manifest, PipelineError, Progress, StageRecord};
use crate::report::emit_report;
use crate::stages::Stage;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "frontstab", version, about = "Stability verification for planar reaction-diffusion fronts")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated stages to run in addition to the subcommand's own
    /// (for `all`: instead of every stage).
    #[arg(long, global = true, value_delimiter = ',')]
    pub stages: Vec<Stage>,
    /// Seed for randomized test data (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve for the front and check it.
    Profile,
    /// Linearization spectrum, zero mode and adjoint.
    Spectrum,
    /// Resolvent kernel checks and bound.
    Resolvent,
    /// Green's function decomposition, pointwise bounds and Lp decay.
    Green,
    /// Nonlinear runs with phase tracking.
    Nonlinear,
    /// Every stage, then the report.
    All,
    /// Rebuild report.md and plot scripts from an existing run.
    Report,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Profile => Some(Stage::Profile),
            Command::Spectrum => Some(Stage::Spectral),
            Command::Resolvent => Some(Stage::Resolvent),
            Command::Green => Some(Stage::Green),
            Command::Nonlinear => Some(Stage::Nonlinear),
            Command::All | Command::Report => None,
        }
    }
}

struct Printer;

impl Progress for Printer {
    fn stage_done(&mut self, rec: &StageRecord, cache_hit: bool) {
        let failed = rec.checks.iter().filter(|c| !c.pass).count();
        let how = if cache_hit { "cached".to_string() } else { format!("{:.1}s", rec.seconds) };
        println!("[{}] {} ({} checks, {} failed, {} files)", rec.stage, how, rec.checks.len(), failed, rec.files.len());
    }
}

fn summarize(m: &Manifest) -> i32 {
    for c in m.checks() {
        let v = c.value.map_or("n/a".into(), |v| format!("{v:.3e}"));
        let l = c.limit.map_or("n/a".into(), |v| format!("{v:.3e}"));
        println!("{} {}/{}: {} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.stage, c.name, v, c.rule.symbol(), l);
    }
    for s in m.stages.iter().filter(|s| s.error.is_some()) {
        println!("FAIL {}: {}", s.stage, s.error.as_deref().unwrap_or_default());
    }
    println!("manifest {}", m.manifest_hash);
    if m.all_pass() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn report(m: &Manifest, dir: &Path) -> Result<(), PipelineError> {
    let files = emit_report(m, dir)?;
    println!("report: {}", files[0].display());
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cfg.output_dir.clone();

    if cli.command == Command::Report {
        if !cli.stages.is_empty() {
            eprintln!("error: --stages does not apply to `report`");
            return EXIT_USAGE;
        }
        let m = match Manifest::load(&dir) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        if let Err(e) = report(&m, &dir) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        return summarize(&m);
    }

    let mut wanted: BTreeSet<Stage> = cli.stages.iter().copied().collect();
    match cli.command.stage() {
        Some(s) => {
            wanted.insert(s);
        }
        None if wanted.is_empty() => wanted.extend(Stage::ALL),
        None => {}
    }
    let result = run_pipeline(&cfg, &wanted, &dir, &mut Printer);
    let manifest = match result {
        Ok(m) => m,
        Err(PipelineError::Stage { stage, message, manifest }) => {
            eprintln!("error: {stage} stage failed: {message}");
            *manifest
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if cli.command == Command::All {
        if let Err(e) = report(&manifest, &dir) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    summarize(&manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_anywhere() {
        let c = Cli::try_parse_from(["frontstab", "all", "--stages", "profile,spectrum", "--seed", "3", "--out", "o"]).unwrap();
        assert_eq!(c.command, Command::All);
        assert_eq!(c.stages, vec![Stage::Profile, Stage::Spectral]);
        assert_eq!(c.seed, Some(3));
        let c = Cli::try_parse_from(["frontstab", "--config", "a.toml", "green"]).unwrap();
        assert_eq!(c.config.as_deref(), Some(Path::new("a.toml")));
        assert!(Cli::try_parse_from(["frontstab", "all", "--stages", "bogus"]).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["frontstab"]), EXIT_USAGE);
        assert_eq!(run(["frontstab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["frontstab", "profile", "--config", "/nonexistent/x.toml"]), EXIT_USAGE);
        assert_eq!(run(["frontstab", "--help"]), EXIT_PASS);
    }
}

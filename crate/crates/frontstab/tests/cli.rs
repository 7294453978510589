use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use frontstab::pipeline::Manifest;
use frontstab::stages::Stage;

fn frontstab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontstab")).args(args).arg("--out").arg(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn profile_only_run_passes_and_reports_the_rest_as_not_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = frontstab(&["profile"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(tmp.path()).unwrap();
    assert_eq!(m.stages.len(), 1);
    assert!(m.all_pass() && m.verify_files(tmp.path()).is_empty());
    assert!(!tmp.path().join("spectral").exists());

    let o = frontstab(&["report"], tmp.path());
    assert_eq!(code(&o), 0);
    let md = fs::read_to_string(tmp.path().join("report.md")).unwrap();
    for s in ["spectral", "resolvent", "green", "nonlinear"] {
        assert!(md.contains(&format!("| {s} | - | - | - | not run |")), "{s}\n{md}");
    }
}

#[test]
fn earlier_stages_stay_listed_and_cached() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&frontstab(&["spectrum"], tmp.path())), 0);
    let first = Manifest::load(tmp.path()).unwrap();
    let o = frontstab(&["resolvent"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[spectral] cached"));
    let m = Manifest::load(tmp.path()).unwrap();
    assert_eq!(m.cache_hits, vec![Stage::Profile, Stage::Spectral]);
    assert_eq!(m.stage(Stage::Spectral), first.stage(Stage::Spectral));

    // a profile-only invocation still lists the valid downstream stages
    assert_eq!(code(&frontstab(&["profile"], tmp.path())), 0);
    assert_eq!(Manifest::load(tmp.path()).unwrap().stages.len(), 3);
}

#[test]
fn failing_check_exits_1_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("strict.toml");
    fs::write(&cfg, "[profile]\nclosed_form_tol = 1e-15\n").unwrap();
    let out = tmp.path().join("run");
    let o = frontstab(&["profile", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL profile/closed_form_linf"));

    fs::write(&cfg, "[profile]\nnodez = 3\n").unwrap();
    let o = frontstab(&["profile", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodez"));

    fs::write(&cfg, "[spectral]\neta0_factor = 2.0\n").unwrap();
    assert_eq!(code(&frontstab(&["profile", "--config", cfg.to_str().unwrap()], &out)), 2);

    assert_eq!(code(&frontstab(&["all", "--stages", "profile,bogus"], &out)), 2);
    assert_eq!(code(&frontstab(&["report"], &tmp.path().join("empty"))), 2);
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&frontstab(&["profile", "--seed", "123"], tmp.path())), 0);
    assert_eq!(Manifest::load(tmp.path()).unwrap().seed, 123);
}

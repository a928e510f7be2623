use std::path::Path;
use std::process::{Command, Output};

fn trapwalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapwalk")).args(args).current_dir(cwd).output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

const SCAN: &str = "experiment = \"var-scan\"\nseed = 5\n\
[model]\nd = 3\nkappa = 1.0\nrho = 1.0\ngamma = 1.0\nalpha = 1.0\n\
[grids]\nn = [1, 2, 3, 4]\n\
[solver]\nrenewal_step = 0.25\n";

#[test]
fn selftest_passes_with_default_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trapwalk(&["selftest"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[pass] rpf_restart"), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(tmp.path().join("out/selftest/selftest.csv").exists());
}

#[test]
fn config_file_and_seed_flag() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("scan.toml"), SCAN).unwrap();
    let a = trapwalk(&["var-scan", "--config", "scan.toml", "--out", "a"], tmp.path());
    let b = trapwalk(&["var-scan", "--config", "scan.toml", "--out", "b", "--seed", "6"], tmp.path());
    assert!(a.status.success() && b.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let (sa, sb) = (summary(&tmp.path().join("a")), summary(&tmp.path().join("b")));
    assert_eq!(sa["seed"], 5);
    assert_eq!(sb["seed"], 6);
    assert_ne!(sa["metadata"]["config_hash"], sb["metadata"]["config_hash"]);
    let ca = std::fs::read(tmp.path().join("a/variation.csv")).unwrap();
    let cb = std::fs::read(tmp.path().join("b/variation.csv")).unwrap();
    assert_ne!(ca, cb);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = trapwalk(&["rpf", "--config", "missing.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(tmp.path().join("scan.toml"), SCAN).unwrap();
    let wrong = trapwalk(&["rpf", "--config", "scan.toml"], tmp.path());
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("not 'rpf'"));

    std::fs::write(tmp.path().join("bad.toml"), SCAN.replace("d = 3", "d = 0")).unwrap();
    assert_eq!(trapwalk(&["var-scan", "--config", "bad.toml"], tmp.path()).status.code(), Some(2));

    std::fs::write(tmp.path().join("typo.toml"), SCAN.replace("[grids]", "[grid]")).unwrap();
    assert_eq!(trapwalk(&["var-scan", "--config", "typo.toml"], tmp.path()).status.code(), Some(2));

    assert_eq!(trapwalk(&["selftest", "--workers", "0"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("file"), "").unwrap();
    assert_eq!(trapwalk(&["selftest", "--out", "file/sub"], tmp.path()).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"rpf\"\nseed = 1\n\
[model]\nd = 2\nkappa = 1.0\nrho = 1.0\ngamma = 1.0\nalpha = 1.0\n\
[alphabet]\nmax_jumps = 1\nmemory = 1\nmax_truncated_mass = 1.0\n\
[solver]\nmax_iter = 2\n";
    std::fs::write(tmp.path().join("rpf.toml"), cfg).unwrap();
    let out = trapwalk(&["rpf", "--config", "rpf.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
}

#[test]
fn potential_cache_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_trapwalk"))
            .args(["rpf", "--out", out])
            .env("TRAPWALK_CACHE_DIR", &cache)
            .current_dir(tmp.path())
            .output()
            .unwrap()
    };
    assert!(run("a").status.success());
    let files: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(files.len(), 1);
    let size = std::fs::metadata(files[0].as_ref().unwrap().path()).unwrap().len();
    assert!(size > 0);
    assert!(run("b").status.success());
    assert_eq!(std::fs::metadata(files[0].as_ref().unwrap().path()).unwrap().len(), size);
    assert_eq!(
        std::fs::read(tmp.path().join("a/rpf.csv")).unwrap(),
        std::fs::read(tmp.path().join("b/rpf.csv")).unwrap()
    );
}

#[test]
fn help_lists_every_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trapwalk(&["--help"], tmp.path());
    let text = String::from_utf8_lossy(&out.stdout);
    for c in ["survival", "gibbs", "rpf", "sigma-curve", "var-scan", "lyapunov-compare", "selftest"] {
        assert!(text.contains(c), "{c}");
    }
}

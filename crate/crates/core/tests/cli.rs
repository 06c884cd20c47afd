use std::path::Path;
use std::process::Command;

fn asyncpd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asyncpd"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn scenario_writes_artifacts_to_env_dir_reproducibly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let status = asyncpd()
            .args(["scenario", "fig3", "--seeds", "2", "--checkpoint-stride", "500"])
            .env("APD_OUT_DIR", dir)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    for name in ["config.toml", "traces.csv", "summary.csv", "thresholds.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert!(!a.path().join("bound.csv").exists());
    let traces = String::from_utf8(read(a.path(), "traces.csv")).unwrap();
    assert!(traces.starts_with("run_id,seed,algo,k,tick,delta,lambda,g_mean,theta_1"));
    assert!(traces.contains("-sync-1,1,sync,"));
}

#[test]
fn out_flag_takes_precedence_over_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let status = asyncpd()
        .args(["scenario", "fig2", "--seeds", "1", "--out"])
        .arg(flag_dir.path())
        .env("APD_OUT_DIR", env_dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(flag_dir.path().join("traces.csv").exists());
    assert!(!env_dir.path().join("traces.csv").exists());
}

#[test]
fn run_from_config_emits_bound() {
    let out = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/constant_step.toml");
    let status = asyncpd()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--seeds", "3", "--master-seed", "40", "--out"])
        .arg(out.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let bound = String::from_utf8(read(out.path(), "bound.csv")).unwrap();
    assert!(bound.starts_with("config_hash,k,bound,applicable"));
    assert!(bound.lines().nth(1).unwrap().ends_with(",true"));
    let traces = String::from_utf8(read(out.path(), "traces.csv")).unwrap();
    assert!(traces.contains("-apd-42,42,apd,"));
}

#[test]
fn invalid_config_lists_every_field_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[problem]\nmeans = [1.0]\nnoise_sd = -1.0\n[run]\nhorizon = 0\nseeds = []\n",
    )
    .unwrap();
    let out = asyncpd().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for field in ["problem.noise_sd", "problem.capacity", "schedule", "stepsize", "run.horizon", "run.seeds"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn oracle_validate_and_bound_subcommands() {
    let out = asyncpd().args(["oracle", "--csv"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",lambda,1,1.0000000000000000e1"));

    let out = asyncpd().args(["validate", "--scenario", "fig2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("activation window: p=1 B=19"));
    assert!(text.contains("step-size conditions: fail"));

    let dir = tempfile::tempdir().unwrap();
    let out = asyncpd()
        .args(["bound", "--scenario", "fig2", "--seeds", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let bound = String::from_utf8(read(dir.path(), "bound.csv")).unwrap();
    assert!(bound.lines().nth(1).unwrap().ends_with(",false"));

    let missing = asyncpd().args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert!(!missing.status.success());
}

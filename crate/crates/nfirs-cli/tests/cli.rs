use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nfirs(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfirs")).current_dir(cwd).args(args).output().unwrap()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

const SMALL: &[&str] = &["--set", "geometry.irs_rows=6", "--set", "geometry.irs_cols=6", "--set", "run.mc_samples=200"];

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfirs(dir.path(), &["--config", "absent.toml", "metrics"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("absent.toml"));
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfirs(dir.path(), &["--set", "geometry.zeta=6", "validate-deployment"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("geometry.zeta"));
}

#[test]
fn zero_power_budget_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "run.p_max_dbm=-inf", "optimize"]);
    let out = nfirs(dir.path(), &args);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out));
    assert!(text(&out).contains("infeasible"));
}

#[test]
fn reference_deployment_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfirs(dir.path(), &["validate-deployment"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let out = nfirs(dir.path(), &["validate-deployment", "--q", "4"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_lists_commands_and_override_keys() {
    let dir = tempfile::tempdir().unwrap();
    let help = text(&nfirs(dir.path(), &["--help"]));
    for needle in ["validate-deployment", "solve-deployment", "channel-dump", "metrics", "optimize", "run", "reproduce"]
    {
        assert!(help.contains(needle), "missing {needle}");
    }
    for key in ["geometry.zeta_irs", "users.positions_m", "fading.rician_kappa_db", "run.seed", "optimizer.rho_scale"] {
        assert!(help.contains(key), "missing {key}");
    }
}

#[test]
fn optimize_is_reproducible_with_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let mut args = SMALL.to_vec();
        args.extend(["--seed", "7", "--out-dir", sub, "optimize"]);
        let out = nfirs(dir.path(), &args);
        assert!(matches!(out.status.code(), Some(0) | Some(4)), "{}", text(&out));
        assert!(text(&out).contains("Monte Carlo sum rate"));
        out
    };
    run("a");
    run("b");
    for name in ["optimize_state.json", "optimize_trace.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let manifest = fs::read_to_string(dir.path().join("a/optimize_manifest.json")).unwrap();
    assert!(manifest.contains("started_unix_s"));
    assert!(!manifest.contains("\"run.seed\""), "seed was given explicitly");
}

#[test]
fn outputs_stay_in_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--out-dir", "out", "channel-dump"]);
    assert_eq!(nfirs(dir.path(), &args).status.code(), Some(0));
    let mut args = SMALL.to_vec();
    args.extend(["--out-dir", "out", "--set", "run.experiment=floor_sweep", "run"]);
    let out = nfirs(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let top: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec!["out"]);
    let mut inner: Vec<String> =
        fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    inner.sort();
    assert_eq!(inner.len(), 6, "{inner:?}");
    assert!(inner.iter().any(|n| n.starts_with("floor_sweep_") && n.ends_with(".csv")));
    assert!(inner.contains(&"bs_irs.csv".to_string()));
}

#[test]
fn unknown_figure_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfirs(dir.path(), &["reproduce", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("fig9"));
}

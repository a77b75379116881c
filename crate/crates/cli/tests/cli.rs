//! End-to-end tests of the `ristep` binary and the file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ristep"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const ONE_D_CONFIG: &str = r#"
format_version = 1

[model]
kind = "one_d"

[run]
tol = 1e-3
tau_init = 0.1

[output]
svg = true
"#;

#[test]
fn run_then_verify_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), ONE_D_CONFIG);
    let out_dir = tmp.path().join("out");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));

    for file in [
        "trajectory.csv",
        "trajectory_states.csv",
        "summary.json",
        "trajectory_trajectory.svg",
        "trajectory_steps.svg",
    ] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["format_version"], 1);
    assert_eq!(summary["model_id"], "one_d");
    assert!(summary["t_last"].as_f64().unwrap() >= 5.0);
    // regime breakpoints near s = 2 and s = 10
    let segs = summary["regime_segments"].as_array().unwrap();
    assert_eq!(segs.len(), 3);
    assert!((segs[0]["s_end"].as_f64().unwrap() - 2.0).abs() <= 0.3);
    assert!((segs[1]["s_end"].as_f64().unwrap() - 10.0).abs() <= 0.3);

    let report_path = tmp.path().join("report.json");
    let out = run_ok(
        bin()
            .args(["verify", "--model", "one_d"])
            .arg("--trajectory")
            .arg(out_dir.join("trajectory.csv"))
            .arg("--states")
            .arg(out_dir.join("trajectory_states.csv"))
            .arg("--summary")
            .arg(out_dir.join("summary.json"))
            .arg("--out")
            .arg(&report_path),
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("ok"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), ONE_D_CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&a));
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&b));
    for file in ["trajectory.csv", "trajectory_states.csv"] {
        let fa = std::fs::read(a.join(file)).unwrap();
        let fb = std::fs::read(b.join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between identical runs");
    }
}

#[test]
fn verification_round_trip_is_bit_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), ONE_D_CONFIG);
    let out_dir = tmp.path().join("out");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    let verify = |name: &str| -> Vec<u8> {
        let path = tmp.path().join(name);
        run_ok(
            bin()
                .args(["verify", "--model", "one_d"])
                .arg("--trajectory")
                .arg(out_dir.join("trajectory.csv"))
                .arg("--states")
                .arg(out_dir.join("trajectory_states.csv"))
                .arg("--summary")
                .arg(out_dir.join("summary.json"))
                .arg("--out")
                .arg(&path),
        );
        std::fs::read(path).unwrap()
    };
    assert_eq!(verify("r1.json"), verify("r2.json"));
}

#[test]
fn shipped_reference_certifies_strictly() {
    let out = run_ok(
        bin()
            .args(["verify", "--model", "one_d", "--gates", "strict"])
            .arg("--trajectory")
            .arg(repo_file("data/reference_one_d.csv"))
            .arg("--states")
            .arg(repo_file("data/reference_one_d_states.csv")),
    );
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["report"]["energy_identity_defect"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn corrupted_time_column_fails_with_monotonicity_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let traj = std::fs::read_to_string(repo_file("data/reference_one_d.csv")).unwrap();
    // make the time column decrease on the final record
    let corrupted = traj.replace(
        "3,1.6000000000000000e1,5.0000000000000000e0",
        "3,1.6000000000000000e1,1.0000000000000000e0",
    );
    assert_ne!(traj, corrupted, "corruption pattern not found");
    let bad_path = tmp.path().join("bad.csv");
    std::fs::write(&bad_path, corrupted).unwrap();

    let out = bin()
        .args(["verify", "--model", "one_d", "--gates", "strict"])
        .arg("--trajectory")
        .arg(&bad_path)
        .arg("--states")
        .arg(repo_file("data/reference_one_d_states.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("time_monotonicity") && stderr.contains("FAIL"),
        "missing monotonicity diagnostic in: {stderr}"
    );
}

#[test]
fn default_gates_without_tolerance_is_a_usage_error() {
    let out = bin()
        .args(["verify", "--model", "one_d"])
        .arg("--trajectory")
        .arg(repo_file("data/reference_one_d.csv"))
        .arg("--states")
        .arg(repo_file("data/reference_one_d_states.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tol"));
}

#[test]
fn unknown_model_id_is_a_usage_error() {
    let out = bin()
        .args(["verify", "--model", "fem3d"])
        .arg("--trajectory")
        .arg(repo_file("data/reference_one_d.csv"))
        .arg("--states")
        .arg(repo_file("data/reference_one_d_states.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[run]
tol = 1e-3
stepsize = 0.5
"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepsize"));
}

#[test]
fn zero_tolerance_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[run]
tol = 0.0
"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_with_single_tolerance_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[sweep]
tols = [1e-3]
"#,
    );
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn uniform_sweep_confirms_fewer_adaptive_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[run]
tau_init = 0.1
[sweep]
tols = [1e-2, 1e-3]
workers = 2
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(
        bin()
            .args(["sweep", "--mode", "uniform", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut steps: std::collections::HashMap<(String, String), usize> = Default::default();
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        steps.insert((f[0].into(), f[1].into()), f[2].parse().unwrap());
    }
    assert_eq!(steps.len(), 4, "expected adaptive and uniform rows per tolerance");
    for tol in ["1.0000000000000000e-2", "1.0000000000000000e-3"] {
        let a = steps[&(tol.to_string(), "adaptive".to_string())];
        let u = steps[&(tol.to_string(), "uniform".to_string())];
        assert!(a <= u, "adaptive {a} > uniform {u} at tol {tol}");
    }
}

#[test]
fn nested_sweep_reports_grid_nesting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[sweep]
tols = [1e-2, 1e-3]
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(
        bin()
            .args(["sweep", "--mode", "nested", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("sweep_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["grids_nested"], true);
}

#[test]
fn nested_run_writes_per_level_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[run]
tol_sequence = [1e-2, 1e-3]
tau_init = 0.1
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert!(out_dir.join("trajectory_level1.csv").exists());
    assert!(out_dir.join("trajectory_level2.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["grids_nested"], true);
    assert_eq!(summary["levels"].as_array().unwrap().len(), 2);
}

#[test]
fn binary_state_snapshots_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "one_d"
[run]
tol = 1e-2
tau_init = 0.1
[output]
state_format = "bin"
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    run_ok(
        bin()
            .args(["verify", "--model", "one_d", "--tol", "1e-2"])
            .arg("--trajectory")
            .arg(out_dir.join("trajectory.csv"))
            .arg("--states")
            .arg(out_dir.join("trajectory_states.bin")),
    );
}

#[test]
fn dump_mesh_writes_operators() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mesh.json");
    run_ok(bin().args(["dump-mesh", "--n", "5", "--out"]).arg(&path));
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(dump["format_version"], 1);
    assert_eq!(dump["coords"].as_array().unwrap().len(), 25);
    assert_eq!(dump["stiffness"]["dim"], 9);
    let masses: Vec<f64> = dump["lumped_mass_all"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((masses.iter().sum::<f64>() - 1.0).abs() <= 1e-13);
}

#[test]
fn fem_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
format_version = 1
[model]
kind = "fem2d"
n_per_side = 7
[run]
tol = 1e-3
tau_init = 0.05
[output]
state_format = "bin"
svg = true
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["t_last"].as_f64().unwrap() >= 1.0);
    let regimes: Vec<&str> = summary["regime_segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["regime"].as_str().unwrap())
        .collect();
    assert!(regimes.contains(&"jump"), "no jump segment in {regimes:?}");
    run_ok(
        bin()
            .args(["verify", "--model", "fem2d_n7"])
            .arg("--trajectory")
            .arg(out_dir.join("trajectory.csv"))
            .arg("--states")
            .arg(out_dir.join("trajectory_states.bin"))
            .arg("--summary")
            .arg(out_dir.join("summary.json")),
    );
}

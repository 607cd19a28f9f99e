//! CLI behavior: exit codes, config diagnostics, and report structure.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_driftlab")
}

fn workdir(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("driftlab-cli-{label}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &PathBuf) -> PathBuf {
    let path = dir.join("space.cfg");
    std::fs::write(
        &path,
        "family = cylinder\nn = 2\nT = 4\nh = 0.1\nfiber_lengths = 0.8\ndensity = zero\n",
    )
    .unwrap();
    path
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");
}

#[test]
fn invalid_config_exits_2_with_field_path() {
    let dir = workdir("badconfig");
    let config = dir.join("bad.cfg");
    std::fs::write(&config, "family = cylinder\nn = 2\nT = nope\nh = 0.1\n").unwrap();
    let out = Command::new(bin())
        .args(["--out", dir.join("o").to_str().unwrap(), "solve", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`T`"), "diagnostic lacks field path: {stderr}");
}

#[test]
fn non_convergence_exits_3_with_report() {
    let dir = workdir("nonconv");
    let config = small_config(&dir);
    let out_dir = dir.join("o");
    // One iteration cannot solve the nonlinear problem from noise.
    let out = Command::new(bin())
        .args(["--out", out_dir.to_str().unwrap(), "solve", "--config"])
        .arg(&config)
        .args([
            "--nl",
            "allen-cahn",
            "--init",
            "random:1,0.4",
            "--tol",
            "1e-12",
            "--max-iter",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["error"].as_str().unwrap().contains("converge"));
    assert_eq!(report["payload"]["converged"], serde_json::json!(false));
}

#[test]
fn reports_carry_schema_version_and_space_echo() {
    let dir = workdir("schema");
    let config = small_config(&dir);
    let out_dir = dir.join("o");
    let status = Command::new(bin())
        .args(["--out", out_dir.to_str().unwrap(), "solve", "--config"])
        .arg(&config)
        .args(["--init", "const:1.0", "--nl", "allen-cahn"])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema_version"], serde_json::json!(1));
    assert_eq!(report["space"]["family"], serde_json::json!("Cylinder"));
    assert_eq!(report["command"], serde_json::json!("solve"));
    // Timestamps live in the separate metadata file.
    assert!(report.get("unix_time").is_none());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("meta.json")).unwrap())
            .unwrap();
    assert!(meta["unix_time"].as_u64().is_some());
    // The solution file exists next to its sidecar.
    assert!(out_dir.join("solution.csv").exists());
    assert!(out_dir.join("solution.csv.space.json").exists());
}

#[test]
fn capacity_and_parabolicity_commands_produce_tables() {
    let dir = workdir("captables");
    let config = small_config(&dir);
    let cap_dir = dir.join("cap");
    let status = Command::new(bin())
        .args(["--out", cap_dir.to_str().unwrap(), "capacity", "--config"])
        .arg(&config)
        .args(["--K", "ball:r=1", "--omega", "ball:r=3"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(cap_dir.join("phi.csv").exists());

    let par_dir = dir.join("par");
    let status = Command::new(bin())
        .args(["--out", par_dir.to_str().unwrap(), "parabolicity", "--method", "capacity", "--config"])
        .arg(&config)
        .args(["--radii", "1.5,2.2,3.3"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(par_dir.join("sequence.csv").exists());
}

//! Binary-level tests: exit codes and stage outputs of small runs.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[mesh]
level = 4

[model]
basis_size = 8

[dbar]
grid_exp = 5
eval_size = 8

[output]
image_scale = 1
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_eit-partial"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "[mesh]\nlevels = 3\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), "[layout]\nelectrodes = 2\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layout"));
    let out = run(dir.path(), SMALL, &["--workers", "0", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_stage_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["complete"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}

#[test]
fn completion_stages_write_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["simulate", "complete", "reconstruct", "evaluate"] {
        let out = run(dir.path(), SMALL, &[stage]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let base = dir.path().join("out");
    for rel in [
        "data/measured.json",
        "data/reference.json",
        "nd/reference.txt",
        "nd/partial.txt",
        "nd/approximated.txt",
        "recon/approximated.csv",
        "images/phantom.png",
        "images/scale.json",
        "tables/summary.csv",
        "manifest.json",
    ] {
        assert!(base.join(rel).exists(), "{rel} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(base.join("manifest.json")).unwrap()).unwrap();
    for stage in ["simulate", "complete", "reconstruct", "evaluate"] {
        assert!(manifest["stages"][stage]["seconds"].is_number(), "{stage}");
    }
    let summary = std::fs::read_to_string(base.join("tables/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn electrode_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("experiment = \"electrode_sweep\"\n{SMALL}\n[sweep]\nremoved = [0, 4]\n");
    let out = run(dir.path(), &config, &["pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("out/tables/table1.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "electrodes,cm_vs_cem,ecm_vs_cem");
    assert!(rows[1].starts_with("16,") && rows[2].starts_with("12,"));
}

#[test]
fn seed_override_changes_noisy_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL}\n[noise]\nlevel = 0.01\n");
    let read = |seed: &str| {
        let out = run(dir.path(), &config, &["--seed", seed, "simulate"]);
        assert!(out.status.success());
        std::fs::read(dir.path().join("out/data/measured.json")).unwrap()
    };
    let a = read("1");
    assert_eq!(a, read("1"));
    assert_ne!(a, read("2"));
}

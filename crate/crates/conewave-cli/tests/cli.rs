use conewave_cli::{Manifest, RunConfig, MANIFEST_SCHEMA_VERSION};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conewave"))
}

#[test]
fn rejects_nonpositive_nu_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--nu", "0", "--check", "none", "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("positive"), "stderr: {err}");
    // rejected before compute: no artifacts written
    assert!(!dir.path().join("o").exists());
}

#[test]
fn refuses_resonant_nu_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--nu", "1", "--check", "none", "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("resonant"), "stderr: {err}");
    assert!(err.contains("--resonant"), "stderr: {err}");
}

#[test]
fn resonant_flag_unlocks_the_guard_and_empty_runs_emit_valid_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("o");
    let out = bin()
        .args(["--nu", "1", "--resonant", "--check", "none", "--out"])
        .arg(&outdir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(outdir.join("manifest.json")).unwrap();
    let manifest: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest.schema_version, MANIFEST_SCHEMA_VERSION);
    assert!(manifest.suites.is_empty());
    assert!(manifest.all_passed());
    // round trip through the documented schema
    let again = serde_json::to_string_pretty(&manifest).unwrap();
    let reparsed: Manifest = serde_json::from_str(&again).unwrap();
    assert_eq!(reparsed.schema_version, manifest.schema_version);
    assert_eq!(reparsed.suites, manifest.suites);
    assert_eq!(reparsed.config.nu, 1.0);
}

#[test]
fn identical_config_and_seed_give_byte_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("o");
    let run = || {
        let out = bin()
            .args(["--check", "bulk", "--k", "2", "--seed", "11", "--out"])
            .arg(&outdir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(outdir.join("manifest.json")).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "manifests differ between identical runs");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.nu = 0.35;
    cfg.k_target = 1;
    cfg.checks = vec!["none".into()];
    cfg.out = dir.path().join("ignored").to_string_lossy().into_owned();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();

    let outdir = dir.path().join("real");
    let out = bin()
        .arg("--config")
        .arg(&cfg_path)
        .args(["--out"])
        .arg(&outdir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("manifest.json")).unwrap())
            .unwrap();
    // value from the file survives; the flag override redirects the output
    assert_eq!(manifest.config.nu, 0.35);
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn bulk_suite_reports_memberships_and_exact_rational_check() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("o");
    let out = bin()
        .args(["--check", "bulk", "--k", "2", "--exact-rational", "--out"])
        .arg(&outdir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS memberships_certified"), "stdout: {stdout}");
    assert!(stdout.contains("exact_rational_recursion"), "stdout: {stdout}");
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest.build.is_some());
    assert!(outdir.join("memberships.csv").exists());
}

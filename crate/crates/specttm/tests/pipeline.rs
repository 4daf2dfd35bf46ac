//! End-to-end pipeline behavior: determinism, provenance, degenerate
//! models, and the command-line surface.

use std::path::PathBuf;
use std::process::Command;

use specttm::cli::{apply_config_text, run_pipeline, validate_config, RunConfig};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("specttm-pipe-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

const SMALL_CONFIG: &str = "
pipeline = custom
master_seed = 11
model.kind = pure_dephasing
model.czz = 1.0
model.cutoff = 2.0
protocol.m_steps = 4
protocol.k_depth = 10
protocol.dt = 0.2
protocol.spam_epsilon = 0.04
";

#[test]
fn identical_configs_produce_identical_outputs() {
    let mut cfg_a = validate_config(SMALL_CONFIG).unwrap();
    cfg_a.output_dir = scratch("det-a");
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = scratch("det-b");

    let out_a = run_pipeline(&cfg_a).unwrap();
    let out_b = run_pipeline(&cfg_b).unwrap();
    assert_eq!(out_a.record.run_id, out_b.record.run_id);

    for name in &out_a.record.files {
        if !name.ends_with(".csv") {
            continue;
        }
        let a = std::fs::read(cfg_a.output_dir.join(name)).unwrap();
        let b = std::fs::read(cfg_b.output_dir.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_changes_run_id_and_output() {
    let mut cfg_a = validate_config(SMALL_CONFIG).unwrap();
    cfg_a.output_dir = scratch("seed-a");
    let mut cfg_b = cfg_a.clone();
    cfg_b.master_seed = 12;
    cfg_b.output_dir = scratch("seed-b");
    let out_a = run_pipeline(&cfg_a).unwrap();
    let out_b = run_pipeline(&cfg_b).unwrap();
    assert_ne!(out_a.record.run_id, out_b.record.run_id);
}

#[test]
fn identity_model_yields_zero_analysis() {
    let text = "
pipeline = custom
model.kind = pure_dephasing
model.czz = 0.0
protocol.m_steps = 4
protocol.k_depth = 10
protocol.dt = 0.2
";
    let mut cfg = validate_config(text).unwrap();
    cfg.output_dir = scratch("ident");
    let out = run_pipeline(&cfg).unwrap();
    assert!(out.rhp_total < 1e-12, "rhp_total = {}", out.rhp_total);
    for n in 1..=4 {
        for axis in 0..3 {
            assert!((out.measured.lambda(axis, n).re - 1.0).abs() < 1e-10);
        }
    }
    let taus = std::fs::read_to_string(cfg.output_dir.join("taus.csv")).unwrap();
    for line in taus.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let n: usize = cols[1].parse().unwrap();
        let re: f64 = cols[2].parse().unwrap();
        let want = if n == 1 { 1.0 } else { 0.0 };
        assert!((re - want).abs() < 1e-9, "tau row {line}");
    }
    let corr = std::fs::read_to_string(cfg.output_dir.join("correlation.csv")).unwrap();
    for line in corr.lines().skip(1) {
        let c: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(c.abs() < 1e-9, "correlation row {line}");
    }
}

#[test]
fn shot_noise_pipeline_runs() {
    let mut cfg = validate_config(SMALL_CONFIG).unwrap();
    cfg.protocol.shots = specttm::protocol::Shots::Finite(1_000_000);
    cfg.output_dir = scratch("shots");
    let out = run_pipeline(&cfg).unwrap();
    assert!(out.rhp_total.is_finite());
    // noisy but reproducible
    let mut cfg2 = cfg.clone();
    cfg2.output_dir = scratch("shots2");
    let out2 = run_pipeline(&cfg2).unwrap();
    assert_eq!(out.record.run_id, out2.record.run_id);
    for n in 1..=4 {
        assert_eq!(out.measured.lambda(0, n), out2.measured.lambda(0, n));
    }
}

#[test]
fn every_csv_has_a_meta_sidecar_with_provenance() {
    let mut cfg = validate_config(SMALL_CONFIG).unwrap();
    cfg.output_dir = scratch("meta");
    let out = run_pipeline(&cfg).unwrap();
    for name in &out.record.files {
        if !name.ends_with(".csv") {
            continue;
        }
        let meta_path = cfg.output_dir.join(format!("{name}.meta"));
        let meta = std::fs::read_to_string(&meta_path)
            .unwrap_or_else(|_| panic!("missing sidecar {meta_path:?}"));
        assert!(meta.contains(&format!("config_hash = {}", out.record.run_id)));
        // the cutoff frequency is always explicit in output metadata
        assert!(meta.contains("model.cutoff = 2"));
    }
}

#[test]
fn invalid_config_leaves_no_outputs() {
    let text = "
pipeline = custom
protocol.k_depth = 2
";
    let mut cfg = apply_config_text(RunConfig::default(), text).unwrap();
    cfg.output_dir = scratch("invalid");
    match run_pipeline(&cfg) {
        Err(specttm::Error::Config(_)) => {}
        Err(other) => panic!("expected config error, got {other}"),
        Ok(_) => panic!("expected config error, run succeeded"),
    }
    assert!(!cfg.output_dir.exists(), "failed run must not create outputs");
}

#[test]
fn cli_resources_subcommand() {
    let out = Command::new(env!("CARGO_BIN_EXE_specttm"))
        .args(["resources", "--qubits", "1", "--K", "10", "--M", "8"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("528\n"), "stdout: {stdout}");
    assert!(stdout.contains("gate_set_tomography: 96"));
}

#[test]
fn cli_validate_reports_problems_with_exit_code_1() {
    let dir = scratch("cli-validate");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.cfg");
    std::fs::write(&path, "protocol.k_depth = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_specttm"))
        .args(["validate"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("2N-2"), "stderr: {stderr}");

    std::fs::write(&path, SMALL_CONFIG).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_specttm"))
        .args(["validate"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn cli_run_preset_writes_outputs() {
    let dir = scratch("cli-run");
    let out = Command::new(env!("CARGO_BIN_EXE_specttm"))
        .args(["run", "--preset", "fig3", "--seed", "5", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("summary.txt").exists());
    assert!(dir.join("gamma.csv").exists());
    let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    let rhp_z: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("rhp_z = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rhp_z > 0.0, "fig3 should report positive RHP on z: {summary}");
}

#[test]
fn cli_run_config_overlays_preset() {
    let dir = scratch("cli-overlay");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("overlay.cfg");
    std::fs::write(&cfg_path, "protocol.m_steps = 4\n").unwrap();
    let out_dir = dir.join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_specttm"))
        .args(["run", "--preset", "fig2"])
        .arg(&cfg_path)
        .args(["--seed", "5", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(out_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("protocol.m_steps = 4"));
    assert!(resolved.contains("model.czz = 4"), "preset base kept: {resolved}");
}

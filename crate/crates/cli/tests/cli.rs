use std::path::Path;
use std::process::Command;

use cma_cli::commands::{cmd_estimates, cmd_manufacture, cmd_solve, Status};
use cma_cli::config::{FlagOverrides, RunConfig};
use cma_cli::verify::{gradient_suite, VerifyOptions};
use cma_core::geometry::trace;
use cma_core::presets::{chi, metric, ChiSpec, MetricPreset};
use cma_core::TorusGrid;

fn cma(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cma"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("CMA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn config(sets: &[&str]) -> RunConfig {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    RunConfig::load(None, &sets, &FlagOverrides::default()).unwrap()
}

#[test]
fn cone_violation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cma(
        &[
            "solve",
            "--grid",
            "8",
            "--set",
            "problem.psi.kind=lifted",
            "--set",
            "problem.psi.factor=5",
            "--set",
            "problem.psi.modulation=0",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "hypothesis_violation");
    assert_eq!(report["cone"]["holds"], false);
}

#[test]
fn bad_configuration_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = cma(&["solve", "--set", "problem.n=5"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let out = cma(&["cone-check", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let out = cma(&["solve", "--set", "problem.bogus=1"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn cone_check_command_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = cma(&["cone-check", "--grid", "8"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("cone.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn manufactured_field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&["problem.m=8", "problem.psi.seed=4"]);
    let made = cmd_manufacture(&cfg, &dir.path().join("made")).unwrap();
    let psi = made.psi_path.display().to_string();
    let u_star = made.u_star_path.display().to_string();
    let cfg = config(&[
        "problem.m=8",
        "problem.psi.kind=explicit_field",
        &format!("problem.psi.path=\"{psi}\""),
        &format!("problem.u_star_path=\"{u_star}\""),
    ]);
    let report = cmd_solve(&cfg, &dir.path().join("solved")).unwrap();
    assert_eq!(report.status, Status::Success);
    let sol = report.solution.unwrap();
    assert!(sol.recovery_error.unwrap() <= 1e-8);
    assert!(sol.b.abs() <= 1e-8);
    assert!(report.verdicts.iter().all(|v| v.pass));
    for f in ["trace.csv", "report.json", "manifest.json", "timings.json"] {
        assert!(dir.path().join("solved").join(f).exists(), "{f}");
    }
}

#[test]
fn estimates_of_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&[
        "problem.m=8",
        "problem.metric_preset=conformal",
        "problem.chi.kind=kahler_perturbed",
        "problem.chi.amplitude=0.01",
        "problem.psi.kind=lifted",
        "problem.psi.factor=1.2",
        "problem.psi.modulation=0.1",
    ]);
    let r = cmd_estimates(&cfg, None, dir.path()).unwrap();
    let grid = TorusGrid::new(2, 8, cfg.problem.diff_mode).unwrap();
    let g = metric(&grid, MetricPreset::Conformal).unwrap();
    let x = chi(&grid, &ChiSpec::KahlerPerturbed { amplitude: 0.01 }).unwrap();
    let expected = trace(&x, &g).unwrap().max();
    assert!((r.estimates.w_max - expected).abs() < 1e-12);
    assert_eq!(r.estimates.c0_osc, 0.0);
    assert!(dir.path().join("estimates.json").exists());
}

#[test]
fn sign_flip_is_caught() {
    let opts = VerifyOptions {
        gradient_samples: 10,
        ..VerifyOptions::default()
    };
    assert!(gradient_suite(&opts).pass);
    let flipped = gradient_suite(&VerifyOptions {
        flip_gradient_sign: true,
        ..opts
    });
    assert!(!flipped.pass);
}

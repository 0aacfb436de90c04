//! Acceptance run: one PASS/FAIL line per criterion, oracle criteria first. Runs
//! the criteria in sequence so that the large grids never share memory.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cma_cli::commands::{cmd_solve, sha256_hex, Status};
use cma_cli::config::{FlagOverrides, RunConfig};
use cma_cli::verify::{concavity_suite, cone_suite, curvature_suite, gradient_suite, wedge_suite, VerifyOptions};
use cma_core::cone::cone_check;
use cma_core::continuity::{newton_correct, run_homotopy, HomotopyState, SolveConfig};
use cma_core::diagnostics::{barrier_probe, c2_monitor, fit_exponent, holder_oscillation};
use cma_core::mongeampere::{manufacture, ProblemData};
use cma_core::presets::{build_problem, far_state, random_u_star, standard_u_star, ChiSpec, MetricPreset, PsiSpec};
use cma_core::{DiffMode, HermitianField, Role, ScalarField, TorusGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn flat_manufactured(m: usize, mode: DiffMode, alpha: usize) -> (ProblemData, ScalarField) {
    let grid = TorusGrid::new(2, m, mode).unwrap();
    let id = HermitianField::identity(&grid, Role::Metric);
    let u_star = standard_u_star(&grid, 0.05);
    let data = manufacture(&u_star, &id, &id.clone().with_role(Role::Chi), alpha).unwrap();
    (data, u_star.mean_zero())
}

fn manufactured_recovery() -> Outcome {
    let cfg = SolveConfig::default();
    let mut worst_err: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    for alpha in 1..=2 {
        let start = Instant::now();
        let (data, u_star) = flat_manufactured(32, DiffMode::Spectral, alpha);
        let trace = match run_homotopy(&data, &HomotopyState::zero(data.grid()), &cfg) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("alpha={alpha}: {e}")),
        };
        worst_time = worst_time.max(start.elapsed().as_secs_f64());
        let fin = &trace.final_state;
        worst_err = worst_err.max(fin.u.sub(&u_star).unwrap().sup_abs());
        worst_b = worst_b.max(fin.b.abs());
    }

    // discretization error of the central scheme against the continuum u*
    let mut errors = Vec::new();
    for m in [16, 32, 64] {
        let (data, u_star) = flat_manufactured(m, DiffMode::Central2, 1);
        let state = HomotopyState::start(u_star.clone(), 0.0);
        match newton_correct(&state, 1.0, &data, &cfg) {
            Ok(s) => errors.push((m as f64, s.u.sub(&u_star).unwrap().sup_abs())),
            Err(e) => return outcome(false, format!("central2 m={m}: {e}")),
        }
    }
    let order = observed_order(&errors);
    let pass = worst_err <= 1e-8 && worst_b <= 1e-8 && worst_time <= 60.0 && (order - 2.0).abs() <= 0.3;
    outcome(
        pass,
        format!(
            "spectral m=32 err={worst_err:.2e} |b|={worst_b:.2e} slowest={worst_time:.1}s; central2 errors {:?} order={order:.3}",
            errors.iter().map(|(_, e)| format!("{e:.2e}")).collect::<Vec<_>>()
        ),
    )
}

/// Least-squares slope of `−ln err` against `ln m`.
fn observed_order(errors: &[(f64, f64)]) -> f64 {
    let k = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|(m, _)| m.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|(_, e)| -e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn suite_outcome(results: &[cma_cli::verify::SuiteResult]) -> Outcome {
    let pass = results.iter().all(|r| r.pass);
    let detail = results
        .iter()
        .map(|r| format!("{} {} worst={:.2e} tol={:.0e} ({} checks)", r.module, r.suite, r.worst, r.tolerance, r.checks))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn preset_suite() -> Vec<(MetricPreset, ChiSpec, PsiSpec, usize)> {
    let chis = [ChiSpec::Identity, ChiSpec::KahlerPerturbed { amplitude: 0.01 }];
    let psis = [
        PsiSpec::Manufactured {
            seed: Some(1),
            amplitude: 0.05,
        },
        PsiSpec::Manufactured {
            seed: None,
            amplitude: 0.05,
        },
        PsiSpec::Lifted {
            factor: 1.0,
            modulation: 0.5,
        },
        PsiSpec::Lifted {
            factor: 1.2,
            modulation: 0.3,
        },
        PsiSpec::Lifted {
            factor: 0.8,
            modulation: 0.4,
        },
        PsiSpec::Lifted {
            factor: 1.6,
            modulation: 0.2,
        },
    ];
    let mut out = Vec::new();
    for preset in MetricPreset::ALL {
        for chi in &chis {
            for psi in &psis {
                for alpha in 1..=2 {
                    out.push((preset, chi.clone(), psi.clone(), alpha));
                }
            }
        }
    }
    out
}

struct PresetRun {
    label: String,
    cone_holds: bool,
    varphi_le_psi: bool,
    log_gap: f64,
    bs: Vec<f64>,
    finished: bool,
}

fn run_presets() -> Vec<PresetRun> {
    let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
    let cfg = SolveConfig::default();
    preset_suite()
        .into_iter()
        .map(|(preset, chi, psi, alpha)| {
            let label = format!("{preset:?}/{chi:?}/{psi:?}/alpha={alpha}");
            let data = build_problem(&grid, preset, &chi, &psi, alpha).unwrap().data;
            let phi = data.varphi().unwrap();
            let log_gap = phi.zip_map(&data.psi, |a, b| (a.ln() - b.ln()).abs()).unwrap().max();
            let varphi_le_psi = phi.values().iter().zip(data.psi.values()).all(|(a, b)| a <= b);
            let cone_holds = cone_check(&data.chi, &data.psi, alpha, &data.g).unwrap().holds;
            let (bs, finished) = match run_homotopy(&data, &HomotopyState::zero(&grid), &cfg) {
                Ok(t) => (t.entries.iter().map(|e| e.b).collect(), t.final_state.t == 1.0),
                Err(_) => (Vec::new(), false),
            };
            PresetRun {
                label,
                cone_holds,
                varphi_le_psi,
                log_gap,
                bs,
                finished,
            }
        })
        .collect()
}

fn b_bound(runs: &[PresetRun]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut states = 0;
    let mut failures = Vec::new();
    for r in runs {
        for b in &r.bs {
            states += 1;
            let excess = b.abs() - r.log_gap;
            worst = worst.max(excess);
            if excess > 1e-8 {
                failures.push(r.label.clone());
            }
        }
    }
    failures.dedup();
    outcome(
        failures.is_empty(),
        format!(
            "{} problems, {states} accepted states, max(|b_t| - gap)={worst:.2e}{}",
            runs.len(),
            if failures.is_empty() { String::new() } else { format!(", failing {failures:?}") }
        ),
    )
}

fn monotonicity(runs: &[PresetRun]) -> Outcome {
    let dominated: Vec<&PresetRun> = runs.iter().filter(|r| r.varphi_le_psi).collect();
    let max_b = dominated
        .iter()
        .flat_map(|r| r.bs.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let cone_runs: Vec<&PresetRun> = runs.iter().filter(|r| r.cone_holds).collect();
    let unfinished: Vec<&str> = cone_runs
        .iter()
        .filter(|r| !r.finished)
        .map(|r| r.label.as_str())
        .collect();
    let pass = !dominated.is_empty() && max_b <= 1e-10 && unfinished.is_empty();
    outcome(
        pass,
        format!(
            "{} problems with phi<=psi, max b_t={max_b:.2e}; {}/{} cone-admissible solves finished{}",
            dominated.len(),
            cone_runs.len() - unfinished.len(),
            cone_runs.len(),
            if unfinished.is_empty() { String::new() } else { format!(", unfinished {unfinished:?}") }
        ),
    )
}

fn config(sets: &[&str]) -> RunConfig {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    RunConfig::load(None, &sets, &FlagOverrides::default()).unwrap()
}

fn kahler_pipeline() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in 1..=2 {
        let cfg = config(&[
            "problem.m=16",
            &format!("problem.alpha={alpha}"),
            "problem.chi.kind=kahler_perturbed",
            "problem.chi.amplitude=0.01",
            "problem.psi.kind=scaled_kahler_constant",
            "problem.psi.factor=1.0",
            "problem.psi.modulation=0.2",
        ]);
        let report = match cmd_solve(&cfg, &dir.path().join(format!("alpha{alpha}"))) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("alpha={alpha}: {e:#}")),
        };
        let (Some(sol), Some(k)) = (&report.solution, &report.kahler) else {
            return outcome(false, format!("alpha={alpha}: {:?} {:?}", report.status, report.error));
        };
        let ok = report.status == Status::Success
            && sol.b <= 1e-8
            && k.quadrature_relative <= 1e-8
            && k.constant_shift_defect <= 1e-9;
        pass &= ok;
        details.push(format!(
            "alpha={alpha} c={:.6} b={:.3e} quadrature={:.1e} shift={:.1e}",
            k.kahler_constant, sol.b, k.quadrature_relative, k.constant_shift_defect
        ));
    }
    outcome(pass, details.join("; "))
}

fn estimate_monitors() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();

    // fitted C at two resolutions, with A fitted once on the coarse grid
    let mut worst_change: f64 = 0.0;
    for (label, seed) in [("standard", None), ("random", Some(2u64))] {
        let sample = |m: usize| {
            let grid = TorusGrid::new(2, m, DiffMode::Spectral).unwrap();
            let id = HermitianField::identity(&grid, Role::Metric);
            let u = match seed {
                None => standard_u_star(&grid, 0.05),
                Some(s) => random_u_star(&grid, s, 0.05),
            };
            let data = manufacture(&u, &id, &id.clone().with_role(Role::Chi), 1).unwrap();
            (u, data)
        };
        let (u32_, d32) = sample(32);
        let a = fit_exponent(&u32_, &d32).unwrap();
        let c32 = c2_monitor(&u32_, &d32, a).unwrap().fitted_c;
        drop((u32_, d32));
        let (u64_, d64) = sample(64);
        let c64 = c2_monitor(&u64_, &d64, a).unwrap().fitted_c;
        let change = (c64 - c32).abs() / c32.abs();
        worst_change = worst_change.max(change);
        details.push(format!("{label} C32={c32:.6} C64={c64:.6}"));
    }
    pass &= worst_change <= 0.01;
    details.push(format!("max change {:.2e}", worst_change));

    let mut thetas = Vec::new();
    let mut monotone = true;
    for (n, m) in [(2, 16), (2, 32), (3, 8)] {
        let grid = TorusGrid::new(n, m, DiffMode::Spectral).unwrap();
        let data = ProblemData::new(
            HermitianField::identity(&grid, Role::Metric),
            HermitianField::identity(&grid, Role::Chi),
            ScalarField::constant(&grid, 1.0),
            1,
        )
        .unwrap();
        let fs = far_state(&grid, 10.0, 0.08);
        match barrier_probe(&fs.u, &fs.ulbar, &data) {
            Ok(p) => {
                pass &= p.empirical_theta > 0.0 && !p.vacuous;
                thetas.push(format!("n={n} m={m} theta={:.3e}", p.empirical_theta));
            }
            Err(e) => {
                pass = false;
                thetas.push(format!("n={n} m={m}: {e}"));
            }
        }

        let h = grid.spacing();
        let radii: Vec<f64> = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0].iter().map(|k| k * h).collect();
        let centers = vec![vec![0.0; 2 * n], vec![0.5; 2 * n], (0..2 * n).map(|i| 0.1 * i as f64).collect()];
        for u in [fs.u, random_u_star(&grid, 4, 0.05), standard_u_star(&grid, 0.05)] {
            let rows = holder_oscillation(&grid.hessian_complex(&u).unwrap(), &radii, &centers).unwrap();
            monotone &= rows.windows(2).all(|w| {
                w[1].phi >= w[0].phi && w[1].per_center.iter().zip(&w[0].per_center).all(|(b, a)| b >= a)
            });
        }
    }
    pass &= monotone;
    details.push(thetas.join(", "));
    details.push(format!("holder monotone={monotone}"));
    outcome(pass, details.join("; "))
}

fn hash_outputs(dir: &Path) -> (String, String) {
    let h = |f: &str| sha256_hex(&std::fs::read(dir.join(f)).unwrap());
    (h("trace.csv"), h("report.json"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for (run, threads) in ["1", "2", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cma"))
            .args(["solve", "--seed", "7", "--grid", "16", "--out"])
            .arg(&out)
            .env("CMA_THREADS", threads)
            .output()
            .unwrap();
        if status.status.code() != Some(0) {
            return outcome(false, format!("run {run} exited with {:?}", status.status.code()));
        }
        hashes.push(hash_outputs(&out));
    }
    let pass = hashes.windows(2).all(|w| w[0] == w[1]);
    outcome(
        pass,
        format!(
            "{} runs (CMA_THREADS 1,2,1,3), trace {} report {}",
            hashes.len(),
            &hashes[0].0[..12],
            &hashes[0].1[..12]
        ),
    )
}

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let presets = std::cell::OnceCell::new();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (2, "equation identity", Box::new(|| suite_outcome(&[wedge_suite(&opts)]))),
        (
            3,
            "derivative correctness",
            Box::new(|| suite_outcome(&[gradient_suite(&opts), concavity_suite(&opts)])),
        ),
        (7, "cone equivalence", Box::new(|| suite_outcome(&[cone_suite(&opts)]))),
        (8, "geometry cross-check", Box::new(|| suite_outcome(&curvature_suite()))),
        (1, "manufactured recovery", Box::new(manufactured_recovery)),
        (4, "b_t bound", Box::new(|| b_bound(presets.get_or_init(run_presets)))),
        (5, "monotonicity", Box::new(|| monotonicity(presets.get_or_init(run_presets)))),
        (6, "kahler pipeline", Box::new(kahler_pipeline)),
        (9, "estimate monitors", Box::new(estimate_monitors)),
        (10, "determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (number, name, run) in &criteria {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<24} {} ({:.1}s) {}",
            number,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

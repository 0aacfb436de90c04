//! The invariant battery: main-path results checked against the independent oracles.

use std::fmt::Write as _;
use std::sync::Arc;

use cma_core::cone::cone_margin_at;
use cma_core::continuity::{solve_linearized, solve_mean_zero, SolveConfig};
use cma_core::geometry::chern_data_with_tolerance;
use cma_core::mongeampere::{linearize, residual, ProblemData};
use cma_core::oracle::{dense_solve_all, fd_directional, second_difference, wedge_cone_eigenvalue, wedge_ratio};
use cma_core::presets::{metric, MetricPreset};
use cma_core::sympoly::{binomial, elementary, max_restricted, pairing, s_alpha_inv, s_alpha_inv_with_gradient};
use cma_core::tensor::pencil_eigenvalues;
use cma_core::{CMat, DiffMode, HermitianField, Role, ScalarField, TorusGrid};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub wedge_pairs: usize,
    pub gradient_samples: usize,
    pub cone_samples: usize,
    /// Test hook: negates the analytic gradient before comparing it with finite differences.
    pub flip_gradient_sign: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            wedge_pairs: 1000,
            gradient_samples: 100,
            cone_samples: 100,
            flip_gradient_sign: false,
        }
    }
}

/// Worst case of one suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub module: String,
    pub suite: String,
    pub checks: usize,
    pub worst: f64,
    pub tolerance: f64,
    /// Where the worst discrepancy occurred.
    pub worst_at: String,
    pub pass: bool,
    pub error: Option<String>,
}

struct Tally {
    module: &'static str,
    suite: &'static str,
    tolerance: f64,
    checks: usize,
    worst: f64,
    worst_at: String,
}

impl Tally {
    fn new(module: &'static str, suite: &'static str, tolerance: f64) -> Self {
        Self {
            module,
            suite,
            tolerance,
            checks: 0,
            worst: 0.0,
            worst_at: String::new(),
        }
    }

    fn record(&mut self, discrepancy: f64, at: impl FnOnce() -> String) {
        self.checks += 1;
        // NaN counts as the worst possible outcome
        let worse = if self.worst.is_nan() {
            false
        } else {
            discrepancy.is_nan() || discrepancy > self.worst || self.checks == 1
        };
        if worse {
            self.worst = discrepancy;
            self.worst_at = at();
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            module: self.module.into(),
            suite: self.suite.into(),
            checks: self.checks,
            pass: self.worst <= self.tolerance,
            worst: self.worst,
            tolerance: self.tolerance,
            worst_at: self.worst_at,
            error: None,
        }
    }
}

fn failed(module: &str, suite: &str, tolerance: f64, e: impl std::fmt::Display) -> SuiteResult {
    SuiteResult {
        module: module.into(),
        suite: suite.into(),
        checks: 0,
        worst: f64::NAN,
        tolerance,
        worst_at: String::new(),
        pass: false,
        error: Some(e.to_string()),
    }
}

fn random_complex(rng: &mut impl Rng, n: usize) -> CMat {
    let mut b = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    b
}

/// `B B^† + floor·I` for a random complex `B`.
pub fn random_positive(rng: &mut impl Rng, n: usize, floor: f64) -> CMat {
    let b = random_complex(rng, n);
    (b * b.adjoint() + CMat::identity(n).scale(floor)).hermitize()
}

/// Random Hermitian matrix with unit Frobenius norm.
pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMat {
    let h = random_complex(rng, n).hermitize();
    h.scale(1.0 / frobenius(&h))
}

fn frobenius(m: &CMat) -> f64 {
    pairing(m, m).sqrt()
}

fn dims() -> impl Iterator<Item = (usize, usize)> {
    (2..=3).flat_map(|n| (1..=n).map(move |a| (n, a)))
}

/// Literal wedge products against `C_n^α S_n/S_{n−α}` of the pencil eigenvalues.
pub fn wedge_suite(opts: &VerifyOptions) -> SuiteResult {
    let tol = 1e-10;
    let mut tally = Tally::new("oracle", "wedge_ratio vs symmetric functions", tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7765);
    for (n, alpha) in dims() {
        for i in 0..opts.wedge_pairs {
            let x = random_positive(&mut rng, n, 0.1);
            let g = random_positive(&mut rng, n, 0.1);
            let run = || -> cma_core::Result<f64> {
                let w = wedge_ratio(&x, &g, alpha)?;
                let lam = pencil_eigenvalues(&x, &g).expect("positive metric");
                let s = binomial(n, alpha) as f64 * elementary(n, &lam[..n])? / elementary(n - alpha, &lam[..n])?;
                Ok((w - s).abs() / s.abs().max(1.0))
            };
            match run() {
                Ok(d) => tally.record(d, || format!("n={n} alpha={alpha} sample={i}")),
                Err(e) => return failed("oracle", "wedge_ratio vs symmetric functions", tol, e),
            }
        }
    }
    tally.finish()
}

/// Centered differences of `−S_α(X^{-1})` against the analytic gradient, relative to
/// `max(|tr(D H)|, ‖D‖ ‖H‖)`.
pub fn gradient_suite(opts: &VerifyOptions) -> SuiteResult {
    let tol = 1e-6;
    let name = "gradient of -S_alpha(X^-1) vs finite differences";
    let mut tally = Tally::new("sympoly", name, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772);
    let sign = if opts.flip_gradient_sign { -1.0 } else { 1.0 };
    for (n, alpha) in dims() {
        for i in 0..opts.gradient_samples {
            let x = random_positive(&mut rng, n, 0.3);
            let g = random_positive(&mut rng, n, 0.3);
            let h = random_hermitian(&mut rng, n);
            let run = || -> cma_core::Result<f64> {
                let (_, d) = s_alpha_inv_with_gradient(&x, &g, alpha)?;
                let analytic = -sign * pairing(&d, &h);
                let fd = fd_directional(|s| Ok(-s_alpha_inv(&(x + h.scale(s)), &g, alpha)?), 1e-5)?;
                let scale = analytic.abs().max(frobenius(&d));
                Ok((fd - analytic).abs() / scale)
            };
            match run() {
                Ok(d) => tally.record(d, || format!("n={n} alpha={alpha} sample={i}")),
                Err(e) => return failed("sympoly", name, tol, e),
            }
        }
    }
    tally.finish()
}

/// Second differences of `−S_α(X^{-1})` along random Hermitian lines; must be `≤ 0`.
pub fn concavity_suite(opts: &VerifyOptions) -> SuiteResult {
    let tol = 1e-8;
    let name = "concavity second difference";
    let mut tally = Tally::new("sympoly", name, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6363);
    for (n, alpha) in dims() {
        for i in 0..opts.gradient_samples {
            let x = random_positive(&mut rng, n, 0.3);
            let g = random_positive(&mut rng, n, 0.3);
            let h = random_hermitian(&mut rng, n);
            match second_difference(|s| Ok(-s_alpha_inv(&(x + h.scale(s)), &g, alpha)?), 1e-3) {
                Ok(d) => tally.record(d.max(0.0), || format!("n={n} alpha={alpha} sample={i} second difference {d:e}")),
                Err(e) => return failed("sympoly", name, tol, e),
            }
        }
    }
    tally.finish()
}

/// Pointwise and wedge-form cone verdicts on random `(χ', ψ)` near the threshold.
pub fn cone_suite(opts: &VerifyOptions) -> SuiteResult {
    let tol = 0.0;
    let name = "pointwise vs wedge cone verdicts";
    let mut tally = Tally::new("cone", name, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x636f);
    for (n, alpha) in dims() {
        for i in 0..opts.cone_samples {
            let chi = random_positive(&mut rng, n, 0.2);
            let g = random_positive(&mut rng, n, 0.2);
            let lam = pencil_eigenvalues(&chi, &g).expect("positive metric");
            let star: Vec<f64> = lam[..n].iter().map(|l| 1.0 / l).collect();
            let (worst, _) = max_restricted(alpha, &star);
            let c = binomial(n, alpha) as f64;
            let psi = if worst > 0.0 {
                c / worst * rng.gen_range(0.5..1.5)
            } else {
                rng.gen_range(0.1..10.0)
            };
            let (margin, _) = cone_margin_at(&lam[..n], psi, alpha);
            match wedge_cone_eigenvalue(&chi, &g, psi, alpha) {
                Ok(mu) => {
                    let disagree = ((mu > 0.0) != (margin > 0.0)) as u8 as f64;
                    tally.record(disagree, || format!("n={n} alpha={alpha} sample={i} margin {margin:e} wedge {mu:e}"));
                }
                Err(e) => return failed("cone", name, tol, e),
            }
        }
    }
    tally.finish()
}

/// Both curvature expressions on the non-flat presets, and vanishing data for a constant metric.
pub fn curvature_suite() -> Vec<SuiteResult> {
    let mut out = Vec::new();
    let grid = match TorusGrid::new(2, 16, DiffMode::Spectral) {
        Ok(g) => g,
        Err(e) => return vec![failed("geometry", "curvature cross-check", 1e-8, e)],
    };
    let mut tally = Tally::new("geometry", "curvature formulas agree", 1e-8);
    for preset in [MetricPreset::Conformal, MetricPreset::HermitianPerturbed] {
        match metric(&grid, preset).and_then(|g| chern_data_with_tolerance(&g, f64::INFINITY)) {
            Ok(c) => tally.record(c.discrepancy(), || format!("{preset:?}")),
            Err(e) => return vec![failed("geometry", "curvature formulas agree", 1e-8, e)],
        }
    }
    out.push(tally.finish());

    let mut tally = Tally::new("geometry", "constant metric has zero connection", 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6765);
    let constant = random_positive(&mut rng, 2, 0.5);
    match HermitianField::uniform(&grid, Role::Metric, constant).and_then(|g| chern_data_with_tolerance(&g, 1e-12)) {
        Ok(c) => {
            tally.record(c.gamma_sup(), || "Gamma".into());
            tally.record(c.torsion_sup(), || "T".into());
            tally.record(c.curvature_sup(), || "R".into());
            out.push(tally.finish());
        }
        Err(e) => out.push(failed("geometry", "constant metric has zero connection", 1e-12, e)),
    }
    out
}

fn small_problem(grid: &Arc<TorusGrid>) -> cma_core::Result<(ProblemData, ScalarField)> {
    let g = metric(grid, MetricPreset::Conformal)?;
    let chi = HermitianField::identity(grid, Role::Chi);
    let psi = grid.sample(|x| 1.0 + 0.2 * (2.0 * std::f64::consts::PI * x[1]).sin());
    let data = ProblemData::new(g, chi, psi, 1)?;
    let u = grid.sample(|x| {
        let tau = 2.0 * std::f64::consts::PI;
        0.02 * (tau * x[0]).cos() + 0.015 * (tau * (x[1] + x[2])).sin()
    });
    Ok((data, u))
}

/// The linearization against centered differences of the residual.
pub fn linearization_suite() -> SuiteResult {
    let tol = 1e-6;
    let name = "linearization vs finite differences";
    let run = || -> cma_core::Result<SuiteResult> {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral)?;
        let (data, u) = small_problem(&grid)?;
        let op = linearize(&u, &data)?;
        let mut tally = Tally::new("mongeampere", name, tol);
        let tau = 2.0 * std::f64::consts::PI;
        let dirs = [
            grid.sample(|x| (tau * x[0]).sin()),
            grid.sample(|x| (tau * (x[1] - x[3])).cos()),
            grid.sample(|x| (2.0 * tau * x[2]).cos() * (tau * x[0]).sin()),
        ];
        for (k, eta) in dirs.iter().enumerate() {
            let l_eta = op.apply(eta)?;
            let shifted = |s: f64| residual(&u.axpy(s, eta)?, 0.0, 1.0, &data);
            let (plus, minus) = (shifted(1e-5)?, shifted(-1e-5)?);
            let scale = l_eta.sup_abs();
            for p in 0..grid.len() {
                let fd = (plus.values()[p] - minus.values()[p]) / 2e-5;
                // dr = −L η
                tally.record((fd + l_eta.values()[p]).abs() / scale, || format!("direction {k} point {p}"));
            }
        }
        Ok(tally.finish())
    };
    run().unwrap_or_else(|e| failed("mongeampere", name, tol, e))
}

/// Dense LU against the iterative bordered solve, and a constant right-hand side flagged by both.
pub fn dense_suite() -> Vec<SuiteResult> {
    let tol = 1e-8;
    let name = "iterative vs dense solve";
    let run = || -> cma_core::Result<Vec<SuiteResult>> {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral)?;
        let (data, u) = small_problem(&grid)?;
        let op = linearize(&u, &data)?;
        let cfg = SolveConfig {
            lin_tol: 1e-13,
            ..SolveConfig::default()
        };
        let tau = 2.0 * std::f64::consts::PI;
        let rhs = grid.sample(|x| (tau * x[0]).sin() + 0.3 * (tau * (x[1] + x[3])).cos() + 0.1);
        let constant = ScalarField::constant(&grid, 1.0);
        let mut dense = dense_solve_all(&op.coeff, &[rhs.clone(), constant.clone()])?;
        let dense_constant = dense.pop().expect("two solutions");
        let dense = dense.pop().expect("two solutions");
        let (eta, s) = solve_linearized(&op, &rhs, &cfg)?;
        let mut tally = Tally::new("oracle", name, tol);
        let scale = dense.eta.sup_abs().max(f64::MIN_POSITIVE);
        tally.record(eta.sub(&dense.eta)?.sup_abs() / scale, || "eta".into());
        tally.record((s - dense.s).abs() / dense.s.abs().max(1.0), || "border multiplier".into());

        let mut flag = Tally::new("oracle", "constant rhs flagged by both solvers", 0.0);
        let dense_flags = dense_constant.s.abs() > 1e-8;
        let iterative_flags = matches!(
            solve_mean_zero(&op, &constant, &cfg),
            Err(cma_core::Error::Singular(_))
        );
        flag.record(((!dense_flags) as u8 + (!iterative_flags) as u8) as f64, || {
            format!("dense flags: {dense_flags}, iterative flags: {iterative_flags}")
        });
        Ok(vec![tally.finish(), flag.finish()])
    };
    run().unwrap_or_else(|e| vec![failed("oracle", name, tol, e)])
}

/// Runs every suite, oracles first.
pub fn run_battery(opts: &VerifyOptions) -> Vec<SuiteResult> {
    let mut out = vec![wedge_suite(opts), gradient_suite(opts), concavity_suite(opts), cone_suite(opts)];
    out.extend(curvature_suite());
    out.push(linearization_suite());
    out.extend(dense_suite());
    out
}

pub fn format_table(results: &[SuiteResult]) -> String {
    let mut s = String::new();
    for r in results {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let _ = write!(
            s,
            "{verdict}  {:<12} {:<52} checks={:<5} worst={:.3e} tol={:.1e}",
            r.module, r.suite, r.checks, r.worst, r.tolerance
        );
        if !r.pass {
            let _ = write!(s, "  at: {}", r.worst_at);
        }
        if let Some(e) = &r.error {
            let _ = write!(s, "  error: {e}");
        }
        s.push('\n');
    }
    s
}

//! Subcommand implementations. Each writes its artifacts under an output directory
//! and returns a report whose status determines the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use cma_core::cone::{cone_check, kahler_constant, quadrature_identity, ConeReport, WedgeCheck};
use cma_core::continuity::{run_homotopy, solve_kahler_two_stage, HomotopyState, HomotopyTrace};
use cma_core::diagnostics::{estimate_report, EstimateOptions, EstimateReport};
use cma_core::error::Error as CoreError;
use cma_core::grid::{DiffMode, ScalarField, TorusGrid};
use cma_core::mongeampere::ProblemData;
use cma_core::presets::{build_problem, BuiltProblem, PsiSpec};
use cma_core::snapshot::{read_scalar, sidecar_path, write_scalar};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Pipeline, RunConfig};

/// Process outcome; maps onto the exit-code contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    HypothesisViolation,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::HypothesisViolation => 2,
            Status::NumericalFailure => 3,
        }
    }
}

pub const EXIT_IO_CONFIG: u8 = 4;

/// Exit code for an error that escaped a command.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Hypothesis(_) | CoreError::DeltaTooLarge { .. } => 2,
                CoreError::Config(_)
                | CoreError::Io(_)
                | CoreError::Format(_)
                | CoreError::Json(_)
                | CoreError::InvalidGrid(_) => EXIT_IO_CONFIG,
                _ => 3,
            };
        }
    }
    EXIT_IO_CONFIG
}

fn classify(e: &CoreError) -> Status {
    match e {
        CoreError::Hypothesis(_) | CoreError::DeltaTooLarge { .. } => Status::HypothesisViolation,
        _ => Status::NumericalFailure,
    }
}

fn is_io_or_config(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Config(_) | CoreError::Io(_) | CoreError::Format(_) | CoreError::Json(_)
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub rule: String,
}

impl Verdict {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            rule: "value <= tolerance".into(),
        }
    }

    fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value > tolerance,
            rule: "value > tolerance".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeSummary {
    pub subsolution: String,
    pub holds: bool,
    pub min_margin: f64,
    pub min_margin_point: usize,
    pub epsilon: f64,
    pub wedge_agrees: bool,
    pub wedge_checks: Vec<WedgeCheck>,
}

impl ConeSummary {
    fn new(subsolution: &str, r: &ConeReport) -> Self {
        Self {
            subsolution: subsolution.into(),
            holds: r.holds,
            min_margin: r.min_margin,
            min_margin_point: r.min_margin_point,
            epsilon: r.epsilon,
            wedge_agrees: r.wedge_agrees,
            wedge_checks: r.wedge_checks.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub rejected_steps: usize,
    pub newton_iters: usize,
    pub krylov_iters: usize,
    pub log_gap: f64,
    pub max_b: f64,
    pub max_b_drift: f64,
}

impl TraceSummary {
    fn new(t: &HomotopyTrace) -> Self {
        Self {
            steps: t.entries.len(),
            rejected_steps: t.rejected_steps,
            newton_iters: t.entries.iter().map(|e| e.newton_iters).sum(),
            krylov_iters: t.entries.iter().map(|e| e.krylov_iters).sum(),
            log_gap: t.log_gap,
            max_b: t.max_b(),
            max_b_drift: t.max_b_drift(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionSummary {
    pub b: f64,
    pub res_inf: f64,
    pub margin: f64,
    pub recovery_error: Option<f64>,
    pub varphi_le_psi: bool,
    pub traces: Vec<TraceSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KahlerSummary {
    pub kahler_constant: f64,
    /// `|c(χ_u) − c(χ)| / |c(χ)|` for the final potential.
    pub constant_shift_defect: f64,
    pub quadrature_lhs: f64,
    pub quadrature_rhs: f64,
    pub quadrature_relative: f64,
    pub stage0_strict: bool,
    pub stage0_varphi_excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub input_hash: String,
    pub pipeline: Pipeline,
    pub status: Status,
    pub error: Option<String>,
    pub verdicts: Vec<Verdict>,
    pub cone: Option<ConeSummary>,
    pub solution: Option<SolutionSummary>,
    pub kahler: Option<KahlerSummary>,
    pub estimates: Option<EstimateReport>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub phases: Vec<(String, f64)>,
}

impl Timings {
    fn lap(&mut self, name: &str, since: &mut Instant) {
        self.phases.push((name.into(), since.elapsed().as_secs_f64()));
        *since = Instant::now();
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the metric, reference form and right-hand side values.
pub fn input_hash(data: &ProblemData) -> String {
    let mut h = Sha256::new();
    for (tag, vals) in [
        ("g", data.g.to_packed()),
        ("chi", data.chi.to_packed()),
        ("psi", data.psi.values().to_vec()),
    ] {
        h.update(tag.as_bytes());
        for v in vals {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Files of one output bundle, listed with their hashes in `manifest.json`.
#[derive(Default)]
struct Bundle {
    files: Vec<PathBuf>,
    roles: Vec<(PathBuf, String)>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    n: usize,
    m: usize,
    alpha: usize,
    diff_mode: DiffMode,
    /// Snapshot path to the role of the field it holds.
    roles: BTreeMap<String, String>,
    files: Vec<ManifestEntry>,
}

impl Bundle {
    fn add(&mut self, p: PathBuf) {
        self.files.push(p);
    }

    fn scalar(&mut self, dir: &Path, name: &str, f: &ScalarField) -> Result<()> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{name}.cmaf"));
        write_scalar(&path, name, f)?;
        self.add(sidecar_path(&path));
        self.add(path.clone());
        self.roles.push((path, name.to_string()));
        Ok(())
    }

    fn write_manifest(&self, out: &Path, cfg: &RunConfig) -> Result<()> {
        let rel = |f: &Path| f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        let mut files = Vec::new();
        for f in &self.files {
            let bytes = fs::read(f).with_context(|| format!("reading {}", f.display()))?;
            files.push(ManifestEntry {
                path: rel(f),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            n: cfg.problem.n,
            m: cfg.problem.m,
            alpha: cfg.problem.alpha,
            diff_mode: cfg.problem.diff_mode,
            roles: self.roles.iter().map(|(p, r)| (rel(p), r.clone())).collect(),
            files,
        };
        write_json(&out.join("manifest.json"), &manifest)
    }
}

/// Potentials are written in the `sup u = 0` gauge.
fn sup_zero(u: &ScalarField) -> ScalarField {
    u.shift(-u.max())
}

fn build(cfg: &RunConfig) -> Result<(Arc<TorusGrid>, BuiltProblem)> {
    let p = &cfg.problem;
    let grid = TorusGrid::new(p.n, p.m, p.diff_mode)?;
    let mut built = build_problem(&grid, p.metric_preset, &p.chi, &p.psi, p.alpha)?;
    if let Some(path) = &p.u_star_path {
        built.u_star = Some(read_scalar(path, &grid)?.mean_zero());
    }
    Ok((grid, built))
}

fn resolved_pipeline(cfg: &RunConfig) -> Pipeline {
    match (cfg.problem.pipeline, &cfg.problem.psi) {
        (Pipeline::Auto, PsiSpec::ScaledKahlerConstant { .. }) => Pipeline::TwoStage,
        (Pipeline::Auto, _) => Pipeline::Homotopy,
        (p, _) => p,
    }
}

/// The subsolution used for the cone check and the monitors: the known solution
/// when there is one, otherwise `0`.
fn subsolution(grid: &Arc<TorusGrid>, built: &BuiltProblem, pipeline: Pipeline) -> (ScalarField, &'static str) {
    match (&built.u_star, pipeline) {
        (Some(u), Pipeline::Homotopy) => (u.clone(), "u_star"),
        _ => (ScalarField::zeros(grid), "zero"),
    }
}

fn estimate_options(cfg: &RunConfig, grid: &TorusGrid) -> EstimateOptions {
    let centers = if cfg.estimates.centers.is_empty() {
        vec![vec![0.0; grid.real_dim()], vec![0.5; grid.real_dim()]]
    } else {
        cfg.estimates.centers.clone()
    };
    EstimateOptions {
        a: cfg.estimates.a,
        radii: cfg.estimates.radii_cells.iter().map(|r| r * grid.spacing()).collect(),
        centers,
    }
}

struct Solved {
    u: ScalarField,
    b: f64,
    traces: Vec<HomotopyTrace>,
    kahler: Option<KahlerSummary>,
}

fn solve_pipeline(
    cfg: &RunConfig,
    pipeline: Pipeline,
    data: &ProblemData,
    ulbar: &ScalarField,
) -> cma_core::error::Result<Solved> {
    match pipeline {
        Pipeline::TwoStage => {
            let res = solve_kahler_two_stage(data, ulbar, cfg.problem.delta, &cfg.solver)?;
            let chi_u = data.chi_u(&res.u)?;
            let (lhs, rhs) = quadrature_identity(&chi_u, &data.g, &data.psi, res.b, data.alpha)?;
            let shifted_c = kahler_constant(&chi_u, &data.g, data.alpha)?;
            let kahler = KahlerSummary {
                kahler_constant: res.kahler_constant,
                constant_shift_defect: (shifted_c - res.kahler_constant).abs() / res.kahler_constant.abs(),
                quadrature_lhs: lhs,
                quadrature_rhs: rhs,
                quadrature_relative: (lhs - rhs).abs() / lhs.abs(),
                stage0_strict: res.stage0.strict,
                stage0_varphi_excess: res.stage0.varphi_excess,
            };
            Ok(Solved {
                u: res.u,
                b: res.b,
                traces: vec![res.trace0, res.trace1],
                kahler: Some(kahler),
            })
        }
        _ => {
            let trace = run_homotopy(data, &HomotopyState::zero(data.grid()), &cfg.solver)?;
            Ok(Solved {
                u: trace.final_state.u.clone(),
                b: trace.final_state.b,
                traces: vec![trace],
                kahler: None,
            })
        }
    }
}

fn combined_csv(traces: &[HomotopyTrace]) -> String {
    let mut out = String::new();
    for (i, t) in traces.iter().enumerate() {
        let csv = t.to_csv();
        if i == 0 {
            out.push_str(&csv);
        } else {
            out.push_str(csv.split_once('\n').map_or("", |(_, rest)| rest));
        }
    }
    out
}

/// Cone check, solve, monitors and artifacts for one configuration.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut timings = Timings::default();
    let mut clock = Instant::now();
    let (grid, built) = build(cfg)?;
    let data = &built.data;
    let pipeline = resolved_pipeline(cfg);
    let (ulbar, ulbar_name) = subsolution(&grid, &built, pipeline);
    timings.lap("build", &mut clock);

    let mut report = RunReport {
        config: cfg.clone(),
        input_hash: input_hash(data),
        pipeline,
        status: Status::Success,
        error: None,
        verdicts: Vec::new(),
        cone: None,
        solution: None,
        kahler: None,
        estimates: None,
    };
    let field_dir = resolve(out, &cfg.outputs.field_dir);
    let mut bundle = Bundle::default();
    bundle.scalar(&field_dir, "psi", &data.psi)?;
    if let Some(u_star) = &built.u_star {
        bundle.scalar(&field_dir, "u_star", &sup_zero(u_star))?;
    }

    let cone = cone_check(&data.chi_u(&ulbar)?, &data.psi, data.alpha, &data.g)?;
    report.verdicts.push(Verdict::above("cone_holds", cone.min_margin, 0.0));
    report.cone = Some(ConeSummary::new(ulbar_name, &cone));
    bundle.scalar(&field_dir, "cone_margin", &cone.margin)?;
    timings.lap("cone", &mut clock);

    let trace_path = resolve(out, &cfg.outputs.trace_csv_path);
    if !cone.holds {
        report.status = Status::HypothesisViolation;
        report.error = Some(format!("cone condition fails (min margin {:e})", cone.min_margin));
    } else {
        match solve_pipeline(cfg, pipeline, data, &ulbar) {
            Ok(solved) => {
                timings.lap("solve", &mut clock);
                record_solution(cfg, &built, &solved, &mut report)?;
                if let Some(parent) = trace_path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&trace_path, combined_csv(&solved.traces))?;
                bundle.add(trace_path.clone());
                bundle.scalar(&field_dir, "u", &sup_zero(&solved.u))?;

                let est = estimate_report(&solved.u, &ulbar, data, &estimate_options(cfg, &grid))?;
                bundle.scalar(&field_dir, "phong_sturm", &est.phi_values)?;
                report.estimates = Some(est);
                timings.lap("estimates", &mut clock);
                if report.verdicts.iter().any(|v| !v.pass) {
                    report.status = Status::NumericalFailure;
                }
            }
            Err(e) if is_io_or_config(&e) => return Err(e.into()),
            Err(e) => {
                report.status = classify(&e);
                report.error = Some(e.to_string());
            }
        }
    }

    let report_path = resolve(out, &cfg.outputs.report_json_path);
    write_json(&report_path, &report)?;
    bundle.add(report_path);
    bundle.write_manifest(out, cfg)?;
    write_json(&out.join("timings.json"), &timings)?;
    Ok(report)
}

fn record_solution(cfg: &RunConfig, built: &BuiltProblem, solved: &Solved, report: &mut RunReport) -> Result<()> {
    let data = &built.data;
    let checks = &cfg.checks;
    let last = solved.traces.last().expect("at least one trace");
    let fin = &last.final_state;

    let drift = solved.traces.iter().map(|t| t.max_b_drift() - t.log_gap).fold(f64::NEG_INFINITY, f64::max);
    let bound = solved.traces.iter().map(|t| t.log_gap).fold(0.0, f64::max);
    let max_drift = solved.traces.iter().map(|t| t.max_b_drift()).fold(0.0, f64::max);
    report.verdicts.push(Verdict {
        name: "bt_bound".into(),
        value: max_drift,
        tolerance: bound + checks.b_slack,
        pass: drift <= checks.b_slack,
        rule: "|b_t - b_0| <= sup|ln start - ln target| + slack on every trace".into(),
    });

    let varphi_le_psi = match data.varphi() {
        Ok(phi) => phi.values().iter().zip(data.psi.values()).all(|(p, s)| p <= s),
        Err(_) => false,
    };
    if varphi_le_psi && solved.kahler.is_none() {
        let max_b = solved.traces[0].max_b();
        report
            .verdicts
            .push(Verdict::at_most("bt_nonpositive", max_b, checks.b_nonpositive_tol));
    }
    report
        .verdicts
        .push(Verdict::at_most("final_residual", fin.res_inf, cfg.solver.tol_newton));

    let recovery_error = match &built.u_star {
        Some(u_star) => Some(solved.u.mean_zero().sub(u_star)?.sup_abs()),
        None => None,
    };
    if let Some(err) = recovery_error {
        report
            .verdicts
            .push(Verdict::at_most("recovery_error", err, checks.recovery_tol));
    }
    if let Some(k) = &solved.kahler {
        report.verdicts.push(Verdict::at_most("final_b", solved.b, checks.b_slack));
        report
            .verdicts
            .push(Verdict::at_most("quadrature_identity", k.quadrature_relative, checks.quadrature_tol));
    }
    report.solution = Some(SolutionSummary {
        b: solved.b,
        res_inf: fin.res_inf,
        margin: fin.margin,
        recovery_error,
        varphi_le_psi,
        traces: solved.traces.iter().map(TraceSummary::new).collect(),
    });
    report.kahler = solved.kahler.clone();
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeCommandReport {
    pub config: RunConfig,
    pub input_hash: String,
    pub status: Status,
    pub cone: ConeSummary,
}

pub fn cmd_cone(cfg: &RunConfig, out: &Path) -> Result<ConeCommandReport> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let (grid, built) = build(cfg)?;
    let data = &built.data;
    let (ulbar, name) = subsolution(&grid, &built, resolved_pipeline(cfg));
    let cone = cone_check(&data.chi_u(&ulbar)?, &data.psi, data.alpha, &data.g)?;
    let mut bundle = Bundle::default();
    bundle.scalar(&resolve(out, &cfg.outputs.field_dir), "cone_margin", &cone.margin)?;
    let report = ConeCommandReport {
        config: cfg.clone(),
        input_hash: input_hash(data),
        status: if cone.holds {
            Status::Success
        } else {
            Status::HypothesisViolation
        },
        cone: ConeSummary::new(name, &cone),
    };
    let path = out.join("cone.json");
    write_json(&path, &report)?;
    bundle.add(path);
    bundle.write_manifest(out, cfg)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatesCommandReport {
    pub config: RunConfig,
    pub input_hash: String,
    pub field: Option<PathBuf>,
    pub status: Status,
    pub estimates: EstimateReport,
}

/// Monitors for the potential in `field` (or `u ≡ 0`) against the configured problem.
pub fn cmd_estimates(cfg: &RunConfig, field: Option<&Path>, out: &Path) -> Result<EstimatesCommandReport> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let (grid, built) = build(cfg)?;
    let data = &built.data;
    let u = match field {
        Some(p) => read_scalar(p, &grid)?,
        None => ScalarField::zeros(&grid),
    };
    let (ulbar, _) = subsolution(&grid, &built, resolved_pipeline(cfg));
    let est = estimate_report(&u, &ulbar, data, &estimate_options(cfg, &grid))?;
    let mut bundle = Bundle::default();
    bundle.scalar(&resolve(out, &cfg.outputs.field_dir), "phong_sturm", &est.phi_values)?;
    let report = EstimatesCommandReport {
        config: cfg.clone(),
        input_hash: input_hash(data),
        field: field.map(Path::to_path_buf),
        status: Status::Success,
        estimates: est,
    };
    let path = out.join("estimates.json");
    write_json(&path, &report)?;
    bundle.add(path);
    bundle.write_manifest(out, cfg)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ManufactureReport {
    pub config: RunConfig,
    pub input_hash: String,
    pub status: Status,
    pub psi_path: PathBuf,
    pub u_star_path: PathBuf,
    pub psi_min: f64,
    pub psi_max: f64,
}

/// Writes `ψ` and `u*` for a manufactured configuration.
pub fn cmd_manufacture(cfg: &RunConfig, out: &Path) -> Result<ManufactureReport> {
    cfg.validate()?;
    if !matches!(cfg.problem.psi, PsiSpec::Manufactured { .. }) {
        return Err(CoreError::Config("manufacture needs problem.psi.kind = \"manufactured\"".into()).into());
    }
    fs::create_dir_all(out)?;
    let (_, built) = build(cfg)?;
    let data = &built.data;
    let u_star = built.u_star.as_ref().expect("manufactured problems carry u*");
    let dir = resolve(out, &cfg.outputs.field_dir);
    let mut bundle = Bundle::default();
    bundle.scalar(&dir, "psi", &data.psi)?;
    bundle.scalar(&dir, "u_star", &sup_zero(u_star))?;
    let report = ManufactureReport {
        config: cfg.clone(),
        input_hash: input_hash(data),
        status: Status::Success,
        psi_path: dir.join("psi.cmaf"),
        u_star_path: dir.join("u_star.cmaf"),
        psi_min: data.psi.min(),
        psi_max: data.psi.max(),
    };
    let path = out.join("manufacture.json");
    write_json(&path, &report)?;
    bundle.add(path);
    bundle.write_manifest(out, cfg)?;
    Ok(report)
}

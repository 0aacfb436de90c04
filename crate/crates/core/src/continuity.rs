//! Method of continuity: Newton correction in `(u, b)`, adaptive marching in `t`,
//! and the two-stage pipeline for Kähler data.

use std::borrow::Cow;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{build_stage0, cone_check, kahler_constant, Stage0};
use crate::error::{Error, Result};
use crate::geometry::{closedness_defect, trace};
use crate::grid::{ScalarField, TorusGrid};
use crate::krylov::bicgstab;
use crate::mongeampere::{evaluate_x, linearize_x, Family, LinearizedOperator, ProblemData};
use crate::tensor::HermitianField;

/// Solver tolerances and step control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Target for `sup |r|`.
    pub tol_newton: f64,
    pub max_newton: usize,
    pub dt_init: f64,
    pub dt_min: f64,
    pub line_search_shrink: f64,
    /// Smallest admissibility margin accepted by the line search.
    pub margin_floor: f64,
    /// Relative residual target of the linear solves.
    pub lin_tol: f64,
    pub max_krylov: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol_newton: 1e-10,
            max_newton: 30,
            dt_init: 0.1,
            dt_min: 1e-4,
            line_search_shrink: 0.5,
            margin_floor: 1e-6,
            lin_tol: 1e-8,
            max_krylov: 500,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_newton", self.tol_newton),
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("line_search_shrink", self.line_search_shrink),
            ("margin_floor", self.margin_floor),
            ("lin_tol", self.lin_tol),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_newton == 0 || self.max_krylov == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= 1.0) {
            return Err(Error::Config("need dt_min <= dt_init <= 1".into()));
        }
        if self.line_search_shrink >= 1.0 {
            return Err(Error::Config("line_search_shrink must be below 1".into()));
        }
        Ok(())
    }
}

/// An accepted point `(t, u_t, b_t)` of the continuity path.
#[derive(Clone, Debug)]
pub struct HomotopyState {
    pub t: f64,
    /// Potential in the mean-zero gauge.
    pub u: ScalarField,
    pub b: f64,
    pub res_inf: f64,
    pub margin: f64,
    pub newton_iters: usize,
    /// `sup |r|` at every Newton iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub krylov_iters: usize,
}

impl HomotopyState {
    /// The trivial start `u = 0`, `b = 0` at `t = 0`.
    pub fn zero(grid: &Arc<TorusGrid>) -> Self {
        Self::start(ScalarField::zeros(grid), 0.0)
    }

    pub fn start(u: ScalarField, b: f64) -> Self {
        Self {
            t: 0.0,
            u: u.mean_zero(),
            b,
            res_inf: f64::NAN,
            margin: f64::NAN,
            newton_iters: 0,
            residual_history: Vec::new(),
            krylov_iters: 0,
        }
    }
}

/// One row of the continuity trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub t: f64,
    pub b: f64,
    pub newton_iters: usize,
    pub krylov_iters: usize,
    pub res_inf: f64,
    pub margin: f64,
    pub w_max: f64,
    pub c0_osc: f64,
    pub mean_u: f64,
    /// `|b_t − b_0|`, bounded by `sup |ln start − ln target|`.
    pub b_drift: f64,
}

#[derive(Clone, Debug)]
pub struct HomotopyTrace {
    pub entries: Vec<TraceEntry>,
    pub final_state: HomotopyState,
    /// `sup |ln start − ln target|` of the family.
    pub log_gap: f64,
    pub b_start: f64,
    pub rejected_steps: usize,
}

impl HomotopyTrace {
    pub fn max_b(&self) -> f64 {
        self.entries.iter().map(|e| e.b).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_b_drift(&self) -> f64 {
        self.entries.iter().map(|e| e.b_drift).fold(0.0, f64::max)
    }

    /// CSV with columns `t,b,newtonIters,resInf,margin,wMax,c0Osc`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,b,newtonIters,resInf,margin,wMax,c0Osc\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                e.t, e.b, e.newton_iters, e.res_inf, e.margin, e.w_max, e.c0_osc
            ));
        }
        s
    }
}

/// `K z = −L z + mean(z)` composed with the constant-coefficient inverse,
/// applied in Fourier space.
struct NewtonOperator<'a> {
    grid: &'a TorusGrid,
    coeff: Cow<'a, [f64]>,
    inv_symbol: Vec<f64>,
    /// Left scaling `tr(mean coeff)/tr(coeff)` per point.
    row_scale: Vec<f64>,
    hat: Vec<C64>,
    buf: Vec<C64>,
}

impl<'a> NewtonOperator<'a> {
    fn new(grid: &'a TorusGrid, op: &'a LinearizedOperator) -> Self {
        let n = grid.n();
        let mean = op.coeff.mean();
        let inv_symbol = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                if p == 0 {
                    return 1.0;
                }
                let mut sym = 0.0;
                for a in 0..n {
                    sym += mean[(a, a)].re * grid.hessian_symbol(a, a, p).re;
                    for b in a + 1..n {
                        sym += 2.0 * (mean[(a, b)].conj() * grid.hessian_symbol(a, b, p)).re;
                    }
                }
                if sym.abs() <= 1e-300 {
                    1.0
                } else {
                    -1.0 / sym
                }
            })
            .collect();
        let mean_trace: f64 = (0..n).map(|a| mean[(a, a)].re).sum();
        let row_scale = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let c = op.coeff.at(p);
                mean_trace / (0..n).map(|a| c[(a, a)].re).sum::<f64>()
            })
            .collect();
        Self {
            grid,
            row_scale,
            coeff: match op.coeff.packed() {
                Some(v) => Cow::Borrowed(v),
                None => Cow::Owned(op.coeff.to_packed()),
            },
            inv_symbol,
            hat: vec![C64::new(0.0, 0.0); grid.len()],
            buf: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    fn precondition_spectrum(&mut self, w: &[f64]) {
        for (h, &v) in self.hat.iter_mut().zip(w) {
            *h = C64::new(v, 0.0);
        }
        self.grid.fft_forward(&mut self.hat);
        let inv = &self.inv_symbol;
        self.hat.par_iter_mut().zip(inv.par_iter()).for_each(|(h, s)| *h *= s);
    }

    fn apply(&mut self, w: &[f64], out: &mut [f64]) -> Result<()> {
        self.precondition_spectrum(w);
        let mean = self.hat[0].re / self.grid.len() as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        self.grid
            .contract_hessian_spectrum(&self.hat, &self.coeff, &mut self.buf, out);
        out.par_iter_mut()
            .zip(self.row_scale.par_iter())
            .for_each(|(o, d)| *o = d * (mean - *o));
        Ok(())
    }

    fn scale_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        rhs.iter().zip(&self.row_scale).map(|(r, d)| r * d).collect()
    }

    fn recover(&mut self, w: &[f64]) -> Vec<f64> {
        self.precondition_spectrum(w);
        self.grid.fft_inverse(&mut self.hat);
        self.hat.iter().map(|v| v.re).collect()
    }
}

/// Solves `L η + s = rhs`, `mean(η) = 0` iteratively; returns `(η, s)`.
pub fn solve_linearized(op: &LinearizedOperator, rhs: &ScalarField, cfg: &SolveConfig) -> Result<(ScalarField, f64)> {
    let grid = Arc::clone(op.grid());
    if !grid.same_lattice(rhs.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut sys = NewtonOperator::new(&grid, op);
    let mut w = vec![0.0; grid.len()];
    let rhs = sys.scale_rhs(rhs.values());
    bicgstab(|v, out| sys.apply(v, out), &rhs, &mut w, cfg.lin_tol, cfg.max_krylov)?;
    // K z = −L z + mean(z), so η = mean(z) − z and s = mean(z)
    let z = sys.recover(&w);
    let s = z.iter().sum::<f64>() / z.len() as f64;
    let eta = ScalarField::new(Arc::clone(&grid), z.iter().map(|v| s - v).collect())?;
    Ok((eta, s))
}

/// Solves `L η = rhs` for mean-zero `η`; errors when `rhs` has a component
/// along the cokernel (detected as a nonzero border multiplier).
pub fn solve_mean_zero(op: &LinearizedOperator, rhs: &ScalarField, cfg: &SolveConfig) -> Result<ScalarField> {
    let (eta, s) = solve_linearized(op, rhs, cfg)?;
    let scale = rhs.sup_abs().max(f64::MIN_POSITIVE);
    if s.abs() > 1e3 * cfg.lin_tol * scale {
        return Err(Error::Singular(format!(
            "right-hand side not in the range of the operator (border multiplier {s:e})"
        )));
    }
    Ok(eta)
}

struct Iterate {
    u: ScalarField,
    b: f64,
    x: Option<HermitianField>,
    r: Vec<f64>,
    res_inf: f64,
    margin: f64,
}

fn evaluate(u: ScalarField, b: f64, data: &ProblemData, offset: &[f64]) -> Result<Iterate> {
    let x = data.chi_u(&u)?;
    let eval = evaluate_x(&x, data)?;
    let r: Vec<f64> = eval.log_s.iter().zip(offset).map(|(l, o)| l + o + b).collect();
    let res_inf = r.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    Ok(Iterate {
        u,
        b,
        x: Some(x),
        r,
        res_inf,
        margin: eval.margin,
    })
}

/// Newton correction at parameter `t` along the standard family `φ → ψ`.
pub fn newton_correct(state: &HomotopyState, t: f64, data: &ProblemData, cfg: &SolveConfig) -> Result<HomotopyState> {
    newton_correct_in_family(state, t, data, &Family::standard(data)?, cfg)
}

/// Solves `r(u, b, t) = 0` by damped Newton on the bordered system
/// `−L η + s = −r`, `mean(η) = 0`.
pub fn newton_correct_in_family(
    state: &HomotopyState,
    t: f64,
    data: &ProblemData,
    family: &Family,
    cfg: &SolveConfig,
) -> Result<HomotopyState> {
    Ok(correct(state, t, data, family, cfg)?.0)
}

/// The corrected state together with its `χ_u`.
fn correct(
    state: &HomotopyState,
    t: f64,
    data: &ProblemData,
    family: &Family,
    cfg: &SolveConfig,
) -> Result<(HomotopyState, HermitianField)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("homotopy parameter {t} outside [0, 1]")));
    }
    let grid = Arc::clone(data.grid());
    let offset = family.offset(t, data.binomial().ln());
    let mut cur = evaluate(state.u.mean_zero(), state.b, data, &offset)?;
    if cur.margin < cfg.margin_floor {
        return Err(Error::Inadmissible {
            point: 0,
            margin: cur.margin,
        });
    }
    let mut history = vec![cur.res_inf];
    let mut krylov_iters = 0;
    for iter in 0..=cfg.max_newton {
        if cur.res_inf <= cfg.tol_newton {
            let done = HomotopyState {
                t,
                u: cur.u,
                b: cur.b,
                res_inf: cur.res_inf,
                margin: cur.margin,
                newton_iters: iter,
                residual_history: history,
                krylov_iters,
            };
            return Ok((done, cur.x.expect("evaluated iterate keeps its form")));
        }
        if iter == cfg.max_newton {
            break;
        }
        let (eta, s) = {
            let op = linearize_x(cur.x.as_ref().expect("evaluated iterate keeps its form"), data)?;
            cur.x = None;
            let mut sys = NewtonOperator::new(&grid, &op);
            let rhs: Vec<f64> = cur.r.iter().map(|v| -v).collect();
            let rhs = sys.scale_rhs(&rhs);
            let mut w = vec![0.0; grid.len()];
            let stats = bicgstab(|v, out| sys.apply(v, out), &rhs, &mut w, cfg.lin_tol, cfg.max_krylov)?;
            krylov_iters += stats.iterations;
            let z = sys.recover(&w);
            let s = z.iter().sum::<f64>() / z.len() as f64;
            let eta = ScalarField::new(Arc::clone(&grid), z.iter().map(|v| v - s).collect())?;
            (eta, s)
        };

        let mut tau = 1.0;
        let next = loop {
            let trial_u = cur.u.axpy(tau, &eta)?.mean_zero();
            let trial_b = cur.b + tau * s;
            match evaluate(trial_u, trial_b, data, &offset) {
                Ok(trial)
                    if trial.margin >= cfg.margin_floor
                        && (trial.res_inf <= (1.0 - 1e-4 * tau) * cur.res_inf
                            || trial.res_inf <= cfg.tol_newton) =>
                {
                    break trial;
                }
                Ok(_) | Err(Error::Inadmissible { .. }) => {}
                Err(e) => return Err(e),
            }
            tau *= cfg.line_search_shrink;
            if tau < 1e-10 {
                return Err(Error::LineSearchStall {
                    iteration: iter,
                    residual: cur.res_inf,
                    margin: cur.margin,
                });
            }
        };
        cur = next;
        history.push(cur.res_inf);
    }
    Err(Error::NewtonMaxIterations {
        iterations: cfg.max_newton,
        residual: cur.res_inf,
    })
}

fn is_retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::NewtonMaxIterations { .. }
            | Error::LineSearchStall { .. }
            | Error::LinearSolver { .. }
            | Error::Inadmissible { .. }
    )
}

fn entry(state: &HomotopyState, x: &HermitianField, data: &ProblemData, b_start: f64) -> Result<TraceEntry> {
    let w = trace(x, &data.g)?;
    Ok(TraceEntry {
        t: state.t,
        b: state.b,
        newton_iters: state.newton_iters,
        krylov_iters: state.krylov_iters,
        res_inf: state.res_inf,
        margin: state.margin,
        w_max: w.max(),
        c0_osc: state.u.max() - state.u.min(),
        mean_u: state.u.mean()?,
        b_drift: (state.b - b_start).abs(),
    })
}

/// Marches the standard family `ψ^t φ^{1−t} e^{b_t}` from `start` (a solution at `t = 0`).
pub fn run_homotopy(data: &ProblemData, start: &HomotopyState, cfg: &SolveConfig) -> Result<HomotopyTrace> {
    run_family(data, &Family::standard(data)?, start, cfg)
}

/// Marches `target^t start^{1−t} e^{b_t}` from `t = 0` to `t = 1`.
pub fn run_family(
    data: &ProblemData,
    family: &Family,
    start: &HomotopyState,
    cfg: &SolveConfig,
) -> Result<HomotopyTrace> {
    cfg.validate()?;
    let log_gap = family.log_gap();
    let b_start = start.b;

    if let Ok((done, x)) = correct_at_rest(start, 1.0, data, family, cfg) {
        let entries = vec![entry(&done, &x, data, b_start)?];
        return Ok(HomotopyTrace {
            entries,
            final_state: done,
            log_gap,
            b_start,
            rejected_steps: 0,
        });
    }

    let (first, x) = correct(start, 0.0, data, family, cfg)?;
    let mut entries = vec![entry(&first, &x, data, b_start)?];
    let mut history: Vec<HomotopyState> = Vec::new();
    let mut cur = first;
    let mut dt = cfg.dt_init;
    let mut rejected = 0;
    while cur.t < 1.0 {
        let mut t_new = (cur.t + dt).min(1.0);
        if 1.0 - t_new < 1e-12 {
            t_new = 1.0;
        }
        let guess = predict(&history, &cur, t_new)?;
        let attempt = match correct(&guess, t_new, data, family, cfg) {
            Err(Error::Inadmissible { .. }) if !history.is_empty() => correct(&cur, t_new, data, family, cfg),
            other => other,
        };
        match attempt {
            Ok((next, x)) => {
                if next.newton_iters <= 3 {
                    dt = (dt * 1.5).min(cfg.dt_init);
                }
                entries.push(entry(&next, &x, data, b_start)?);
                history.push(std::mem::replace(&mut cur, next));
                if history.len() > 2 {
                    history.remove(0);
                }
            }
            Err(e) if is_retryable(&e) => {
                rejected += 1;
                dt *= 0.5;
                if dt < cfg.dt_min {
                    return Err(Error::StepUnderflow { last_t: cur.t });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(HomotopyTrace {
        entries,
        final_state: cur,
        log_gap,
        b_start,
        rejected_steps: rejected,
    })
}

/// Lagrange extrapolation of `(u, b)` through the recent accepted states and `cur`.
fn predict(history: &[HomotopyState], cur: &HomotopyState, t: f64) -> Result<HomotopyState> {
    if history.is_empty() {
        return Ok(cur.clone());
    }
    let nodes: Vec<&HomotopyState> = history.iter().chain(std::iter::once(cur)).collect();
    let mut u = ScalarField::zeros(cur.u.grid());
    let mut b = 0.0;
    for (i, ni) in nodes.iter().enumerate() {
        let w: f64 = nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, nj)| (t - nj.t) / (ni.t - nj.t))
            .product();
        u = u.axpy(w, &ni.u)?;
        b += w * ni.b;
    }
    Ok(HomotopyState { u, b, ..cur.clone() })
}

/// Accepts `start` as the solution at `t` only if it already meets the tolerance.
fn correct_at_rest(
    start: &HomotopyState,
    t: f64,
    data: &ProblemData,
    family: &Family,
    cfg: &SolveConfig,
) -> Result<(HomotopyState, HermitianField)> {
    let strict = SolveConfig {
        max_newton: 0,
        ..cfg.clone()
    };
    correct(start, t, data, family, &strict)
}

/// Output of the two-stage solve.
#[derive(Clone, Debug)]
pub struct TwoStageResult {
    /// Final potential relative to the original `χ`, mean-zero gauge.
    pub u: ScalarField,
    pub b: f64,
    pub stage0: Stage0,
    pub kahler_constant: f64,
    /// Continuity trace from `φ_v` to `ψ_0`.
    pub trace0: HomotopyTrace,
    /// Continuity trace from `ψ_0` to `ψ`.
    pub trace1: HomotopyTrace,
}

/// Tolerance for the closedness and `ψ ≥ c` hypotheses.
const HYPOTHESIS_TOL: f64 = 1e-8;

/// Solves with target `data.psi` by first solving for `ψ_0` from the subsolution
/// `u̲` and then deforming `ψ_0` into `ψ`.
pub fn solve_kahler_two_stage(
    data: &ProblemData,
    ulbar: &ScalarField,
    delta: f64,
    cfg: &SolveConfig,
) -> Result<TwoStageResult> {
    cfg.validate()?;
    let g_defect = closedness_defect(&data.g)?;
    let chi_defect = closedness_defect(&data.chi)?;
    if g_defect > HYPOTHESIS_TOL || chi_defect > HYPOTHESIS_TOL {
        return Err(Error::Hypothesis(format!(
            "metric and chi must be closed (defects {g_defect:e}, {chi_defect:e})"
        )));
    }
    let c = kahler_constant(&data.chi, &data.g, data.alpha)?;
    let psi_min = data.psi.min();
    if psi_min < c - HYPOTHESIS_TOL * c.abs().max(1.0) {
        return Err(Error::Hypothesis(format!(
            "psi must be at least the class constant {c} (min psi {psi_min})"
        )));
    }
    let chi_ulbar = data.chi_u(ulbar)?;
    let cone = cone_check(&chi_ulbar, &data.psi, data.alpha, &data.g)?;
    if !cone.holds {
        return Err(Error::Hypothesis(format!(
            "cone condition fails for the subsolution (min margin {:e})",
            cone.min_margin
        )));
    }
    let stage0 = build_stage0(ulbar, &data.psi, delta, data)?;

    let shifted = ProblemData::new(
        data.g.clone(),
        data.chi_u(&stage0.v)?,
        stage0.psi0.clone(),
        data.alpha,
    )?;
    let first = Family::new(&stage0.varphi_v, &stage0.psi0)?;
    let trace0 = run_family(&shifted, &first, &HomotopyState::zero(data.grid()), cfg)?;

    let second = Family::new(&stage0.psi0, &data.psi)?;
    let mid = &trace0.final_state;
    let trace1 = run_family(&shifted, &second, &HomotopyState::start(mid.u.clone(), mid.b), cfg)?;

    let fin = &trace1.final_state;
    let u = stage0.v.axpy(1.0, &fin.u)?.mean_zero();
    Ok(TwoStageResult {
        u,
        b: fin.b,
        stage0,
        kahler_constant: c,
        trace0,
        trace1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DiffMode;
    use crate::mongeampere::{manufacture, residual};
    use crate::tensor::Role;
    use std::f64::consts::PI;

    #[test]
    fn default_config_is_valid() {
        SolveConfig::default().validate().unwrap();
        let bad = SolveConfig {
            dt_min: 0.5,
            dt_init: 0.1,
            ..SolveConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exact_start_needs_no_iterations() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let g = HermitianField::identity(&grid, Role::Metric);
        let u = grid.sample(|x| 0.05 * (2.0 * PI * x[0]).cos());
        let data = manufacture(&u, &g, &g, 1).unwrap();
        let state = HomotopyState::start(u.clone(), 0.0);
        let out = newton_correct(&state, 1.0, &data, &SolveConfig::default()).unwrap();
        assert_eq!(out.newton_iters, 0);
        assert!(out.u.sub(&u).unwrap().sup_abs() < 1e-15);
    }

    #[test]
    fn single_jump_converges() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let g = HermitianField::identity(&grid, Role::Metric);
        let u_star = grid.sample(|x| 0.05 * (2.0 * PI * x[0]).cos() + 0.03 * (2.0 * PI * x[3]).cos());
        let data = manufacture(&u_star, &g, &g, 1).unwrap();
        let out = newton_correct(&HomotopyState::zero(&grid), 1.0, &data, &SolveConfig::default()).unwrap();
        let err = out.u.sub(&u_star.mean_zero()).unwrap().sup_abs();
        assert!(err < 1e-9, "error {err}");
        assert!(out.b.abs() < 1e-10);
        assert!(residual(&out.u, out.b, 1.0, &data).unwrap().sup_abs() <= 1e-10);
    }
}

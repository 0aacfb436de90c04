//! Monitors for the a priori estimates: the second-order quantity
//! `w = tr_g χ_u`, the Phong–Sturm test function, the barrier inequality
//! and the oscillation function `Φ(R)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone::cone_check;
use crate::error::{Error, Result};
use crate::geometry::trace;
use crate::grid::{ScalarField, TorusGrid};
use crate::mongeampere::ProblemData;
use crate::sympoly::restricted;
use crate::tensor::{pencil_eigen, HermitianField};

/// `w = tr(g^{-1} χ_u) = Δ_g u + tr_g χ`.
pub fn w_field(u: &ScalarField, data: &ProblemData) -> Result<ScalarField> {
    trace(&data.chi_u(u)?, &data.g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct C2Monitor {
    pub w_max: f64,
    pub fitted_c: f64,
}

/// `sup w` and `C = sup w e^{−A(u − inf u)}`, so that `w ≤ C e^{A(u − inf u)}` holds on the grid.
pub fn c2_monitor(u: &ScalarField, data: &ProblemData, a: f64) -> Result<C2Monitor> {
    let w = w_field(u, data)?;
    Ok(c2_from_w(&w, u, a))
}

fn c2_from_w(w: &ScalarField, u: &ScalarField, a: f64) -> C2Monitor {
    let inf = u.min();
    let fitted_c = w
        .values()
        .iter()
        .zip(u.values())
        .fold(f64::NEG_INFINITY, |acc, (wv, uv)| acc.max(wv * (-a * (uv - inf)).exp()));
    C2Monitor {
        w_max: w.max(),
        fitted_c,
    }
}

/// Least-squares slope of `ln w` against `u − inf u`, clamped at zero.
pub fn fit_exponent(u: &ScalarField, data: &ProblemData) -> Result<f64> {
    let w = w_field(u, data)?;
    Ok(slope(&w, u))
}

fn slope(w: &ScalarField, u: &ScalarField) -> f64 {
    let len = u.len() as f64;
    let inf = u.min();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (wv, uv) in w.values().iter().zip(u.values()) {
        sx += uv - inf;
        sy += wv.ln();
    }
    let (mx, my) = (sx / len, sy / len);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (wv, uv) in w.values().iter().zip(u.values()) {
        let dx = uv - inf - mx;
        sxy += dx * (wv.ln() - my);
        sxx += dx * dx;
    }
    if sxx <= 0.0 {
        0.0
    } else {
        (sxy / sxx).max(0.0)
    }
}

/// `φ = −A(u − u̲) + 1/(u − u̲ − inf(u − u̲) + 1)`.
pub fn phong_sturm(u: &ScalarField, ulbar: &ScalarField, a: f64) -> Result<ScalarField> {
    let d = u.sub(ulbar)?;
    let inf = d.min();
    Ok(d.map(|v| -a * v + 1.0 / (v - inf + 1.0)))
}

/// Per-point ingredients of the barrier inequality.
#[derive(Clone, Debug)]
pub struct BarrierSample {
    pub w: f64,
    /// `Σ_i S_{α−1;i}(λ^*) (X^{iī})² (u̲_{iī} − u_{iī})`.
    pub lhs: f64,
    /// `Σ_i S_{α−1;i}(λ^*) (X^{iī})²`.
    pub weight: f64,
}

impl BarrierSample {
    /// Largest `θ` with `lhs ≥ θ weight + θ` at this point.
    pub fn theta(&self) -> f64 {
        self.lhs / (self.weight + 1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierProbe {
    /// Smallest per-point `θ` over the regime `w ≥ N`; zero when the regime is empty.
    pub empirical_theta: f64,
    pub empirical_n: f64,
    /// No grid point lies in the regime, i.e. `N > sup w`.
    pub vacuous: bool,
    /// Points outside the regime where the inequality fails for every `θ > 0`.
    pub failure_points: usize,
    pub sup_w: f64,
}

/// Evaluates the barrier inequality in the frame where `g = I` and `χ_u` is diagonal.
pub fn barrier_samples(u: &ScalarField, ulbar: &ScalarField, data: &ProblemData) -> Result<Vec<BarrierSample>> {
    let grid = data.grid();
    let n = grid.n();
    let alpha = data.alpha;
    let x = data.chi_u(u)?;
    let xl = data.chi_u(ulbar)?;
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let gp = data.g.at(p);
            let (lambda, frame) = pencil_eigen(&x.at(p), &gp).ok_or_else(|| Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: gp.hermitian_eigenvalues()[0],
            })?;
            if lambda[0] <= 0.0 {
                return Err(Error::Inadmissible {
                    point: p,
                    margin: lambda[0],
                });
            }
            let star: Vec<f64> = lambda[..n].iter().map(|l| 1.0 / l).collect();
            let lower = frame.adjoint() * xl.at(p) * frame;
            let (mut lhs, mut weight) = (0.0, 0.0);
            for i in 0..n {
                let s = restricted(alpha - 1, &star, &[i])?;
                let c = s * star[i] * star[i];
                lhs += c * (lower[(i, i)].re - lambda[i]);
                weight += c;
            }
            let w = lambda[..n].iter().sum();
            Ok(BarrierSample { w, lhs, weight })
        })
        .collect()
}

/// Empirical `(θ, N)` for the barrier inequality; refuses when `χ_{u̲}` violates the cone condition.
pub fn barrier_probe(u: &ScalarField, ulbar: &ScalarField, data: &ProblemData) -> Result<BarrierProbe> {
    let cone = cone_check(&data.chi_u(ulbar)?, &data.psi, data.alpha, &data.g)?;
    if !cone.holds {
        return Err(Error::Hypothesis(format!(
            "cone condition fails for the subsolution (min margin {:e}); barrier probe is meaningless",
            cone.min_margin
        )));
    }
    let samples = barrier_samples(u, ulbar, data)?;
    Ok(summarize_barrier(&samples))
}

fn summarize_barrier(samples: &[BarrierSample]) -> BarrierProbe {
    let sup_w = samples.iter().fold(f64::NEG_INFINITY, |acc, s| acc.max(s.w));
    let worst_bad_w = samples
        .iter()
        .filter(|s| s.theta() <= 0.0)
        .fold(f64::NEG_INFINITY, |acc, s| acc.max(s.w));
    let regime: Vec<&BarrierSample> = samples.iter().filter(|s| s.w > worst_bad_w).collect();
    let failure_points = samples.len() - regime.len();
    if regime.is_empty() {
        return BarrierProbe {
            empirical_theta: 0.0,
            empirical_n: next_up(sup_w),
            vacuous: true,
            failure_points,
            sup_w,
        };
    }
    let empirical_n = regime.iter().fold(f64::INFINITY, |acc, s| acc.min(s.w));
    let empirical_theta = regime.iter().fold(f64::INFINITY, |acc, s| acc.min(s.theta()));
    BarrierProbe {
        empirical_theta,
        empirical_n,
        vacuous: false,
        failure_points,
        sup_w,
    }
}

fn next_up(x: f64) -> f64 {
    x + x.abs().max(1.0) * 1e-12
}

/// Unit vectors `e_a`, `(e_a ± e_b)/√2` and `(e_a ± i e_b)/√2`.
pub fn hermitian_directions(n: usize) -> Vec<[C64; 3]> {
    let mut dirs = Vec::with_capacity(2 * n * n - n);
    let zero = C64::new(0.0, 0.0);
    for a in 0..n {
        let mut e = [zero; 3];
        e[a] = C64::new(1.0, 0.0);
        dirs.push(e);
    }
    for a in 0..n {
        for b in a + 1..n {
            for other in [
                C64::new(FRAC_1_SQRT_2, 0.0),
                C64::new(-FRAC_1_SQRT_2, 0.0),
                C64::new(0.0, FRAC_1_SQRT_2),
                C64::new(0.0, -FRAC_1_SQRT_2),
            ] {
                let mut e = [zero; 3];
                e[a] = C64::new(FRAC_1_SQRT_2, 0.0);
                e[b] = other;
                dirs.push(e);
            }
        }
    }
    dirs
}

/// `u_{γγ̄} = Σ γ^a γ̄^b u_{ab̄}` for each canonical direction.
pub fn directional_entries(hess: &HermitianField) -> Vec<ScalarField> {
    let n = hess.n();
    let grid = hess.grid();
    hermitian_directions(n)
        .iter()
        .map(|gamma| {
            let vals = (0..grid.len())
                .into_par_iter()
                .map(|p| {
                    let h = hess.at(p);
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..n {
                        for b in 0..n {
                            acc += gamma[a] * gamma[b].conj() * h[(a, b)];
                        }
                    }
                    acc.re
                })
                .collect();
            ScalarField::new(Arc::clone(grid), vals).expect("length matches grid")
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderRow {
    pub radius: f64,
    /// `max` over centers of `Σ_k osc_{B_R} u_{γ_kγ̄_k}`.
    pub phi: f64,
    /// The same sum at each center, in input order.
    pub per_center: Vec<f64>,
}

fn nearest_point(grid: &TorusGrid, center: &[f64]) -> Result<usize> {
    if center.len() != grid.real_dim() {
        return Err(Error::Config(format!(
            "center has {} coordinates, expected {}",
            center.len(),
            grid.real_dim()
        )));
    }
    let m = grid.m() as isize;
    let offsets: Vec<isize> = center
        .iter()
        .map(|c| ((c * m as f64).round() as isize).rem_euclid(m))
        .collect();
    Ok(grid.shifted(0, &offsets))
}

/// Grid points within periodic Euclidean distance `radius` of `center`.
fn ball(grid: &TorusGrid, center: usize, radius: f64) -> Vec<usize> {
    let dims = grid.real_dim();
    let h = grid.spacing();
    let reach = (radius / h).floor() as isize;
    let width = (2 * reach + 1) as usize;
    let total = width.pow(dims as u32);
    let mut out = Vec::new();
    let mut offs = vec![0isize; dims];
    for idx in 0..total {
        let mut rest = idx;
        let mut dist2 = 0.0;
        for o in offs.iter_mut().rev() {
            *o = (rest % width) as isize - reach;
            rest /= width;
            dist2 += (*o as f64 * h).powi(2);
        }
        if dist2 <= radius * radius * (1.0 + 1e-12) {
            out.push(grid.shifted(center, &offs));
        }
    }
    // balls wider than the torus revisit points
    out.sort_unstable();
    out.dedup();
    out
}

/// `Φ(R) = Σ_k osc_{B_R} u_{γ_kγ̄_k}` for each radius, maximized over the centers.
pub fn holder_oscillation(hess: &HermitianField, radii: &[f64], centers: &[Vec<f64>]) -> Result<Vec<HolderRow>> {
    let grid = Arc::clone(hess.grid());
    let h = grid.spacing();
    for &r in radii {
        if !(r >= h) {
            return Err(Error::RadiusBelowSpacing { radius: r, spacing: h });
        }
    }
    let centers: Vec<usize> = centers
        .iter()
        .map(|c| nearest_point(&grid, c))
        .collect::<Result<_>>()?;
    let entries = directional_entries(hess);
    radii
        .iter()
        .map(|&radius| {
            let per_center: Vec<f64> = centers
                .iter()
                .map(|&c| {
                    let pts = ball(&grid, c, radius);
                    entries
                        .iter()
                        .map(|f| {
                            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                                let v = f.values()[p];
                                (lo.min(v), hi.max(v))
                            });
                            hi - lo
                        })
                        .sum()
                })
                .collect();
            let phi = per_center.iter().fold(0.0, |acc: f64, v| acc.max(*v));
            Ok(HolderRow {
                radius,
                phi,
                per_center,
            })
        })
        .collect()
}

/// `Lip = 2 Σ_k sup |∇ u_{γ_kγ̄_k}|`, so that `Φ(R) ≤ Lip · R` (a ball has diameter `2R`).
pub fn holder_lipschitz_bound(hess: &HermitianField) -> Result<f64> {
    let grid = Arc::clone(hess.grid());
    let mut total = 0.0;
    for f in directional_entries(hess) {
        let mut hat: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
        grid.fft_forward(&mut hat);
        let mut grad2 = vec![0.0; grid.len()];
        for axis in 0..grid.real_dim() {
            let mut d: Vec<C64> = hat
                .par_iter()
                .enumerate()
                .map(|(p, v)| v * C64::new(0.0, grid.first_symbol(grid.axis_index(p, axis))))
                .collect();
            grid.fft_inverse(&mut d);
            grad2.iter_mut().zip(&d).for_each(|(g, v)| *g += v.re * v.re);
        }
        total += grad2.iter().fold(0.0, |acc: f64, v| acc.max(*v)).sqrt();
    }
    Ok(2.0 * total)
}

/// Summary of all monitors at one state.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub w_max: f64,
    pub c0_osc: f64,
    pub fitted_c: f64,
    pub fitted_a: f64,
    pub barrier_theta: f64,
    pub barrier_n: f64,
    pub barrier: Option<BarrierProbe>,
    /// Reason the barrier probe was skipped, if it was.
    pub barrier_skipped: Option<String>,
    #[serde(skip)]
    pub phi_values: ScalarField,
    pub phi_min: f64,
    pub phi_max: f64,
    pub holder_table: Vec<HolderRow>,
    pub holder_lipschitz: f64,
}

/// Options for [`estimate_report`].
#[derive(Clone, Debug)]
pub struct EstimateOptions {
    /// Exponent `A`; fitted by least squares when absent.
    pub a: Option<f64>,
    pub radii: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

pub fn estimate_report(
    u: &ScalarField,
    ulbar: &ScalarField,
    data: &ProblemData,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let w = w_field(u, data)?;
    let a = opts.a.unwrap_or_else(|| slope(&w, u));
    let c2 = c2_from_w(&w, u, a);
    let (barrier, barrier_skipped) = match barrier_probe(u, ulbar, data) {
        Ok(b) => (Some(b), None),
        Err(Error::Hypothesis(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let phi_values = phong_sturm(u, ulbar, a)?;
    let hess = data.grid().hessian_complex(u)?;
    Ok(EstimateReport {
        w_max: c2.w_max,
        c0_osc: u.max() - u.min(),
        fitted_c: c2.fitted_c,
        fitted_a: a,
        barrier_theta: barrier.as_ref().map_or(f64::NAN, |b| b.empirical_theta),
        barrier_n: barrier.as_ref().map_or(f64::NAN, |b| b.empirical_n),
        barrier,
        barrier_skipped,
        phi_min: phi_values.min(),
        phi_max: phi_values.max(),
        phi_values,
        holder_table: holder_oscillation(&hess, &opts.radii, &opts.centers)?,
        holder_lipschitz: holder_lipschitz_bound(&hess)?,
    })
}

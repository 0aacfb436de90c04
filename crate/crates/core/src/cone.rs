//! Cone-condition certification, the Kähler class constant and the
//! construction of the intermediate right-hand side for the two-stage solve.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::mongeampere::{varphi_of, ProblemData};
use crate::oracle::wedge_cone_eigenvalue;
use crate::sympoly::{binomial, elementary_small, max_restricted};
use crate::tensor::{pencil_eigenvalues, HermitianField};

/// Number of grid points at which the wedge form is cross-checked.
pub const WEDGE_SAMPLES: usize = 16;
const WEDGE_SEED: u64 = 0x636f6e65;

/// Comparison of the two cone formulations at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct WedgeCheck {
    pub point: usize,
    /// Pointwise margin rescaled by `ψ/C_n^α`.
    pub normalized_margin: f64,
    /// Smallest eigenvalue of the wedge-form pairing.
    pub wedge_eigenvalue: f64,
    pub agree: bool,
}

#[derive(Clone, Debug)]
pub struct ConeReport {
    pub holds: bool,
    /// `C_n^α/ψ − max_k S_{α;k}(λ^*(χ'))` at each point.
    pub margin: ScalarField,
    /// Index `k` attaining the maximum at each point.
    pub worst_index: Vec<usize>,
    pub min_margin: f64,
    pub min_margin_point: usize,
    /// `ε` with `ε ω ≤ χ' ≤ ε^{-1} ω`.
    pub epsilon: f64,
    pub wedge_checks: Vec<WedgeCheck>,
    pub wedge_agrees: bool,
}

impl ConeReport {
    pub fn epsilon_bounds(&self) -> (f64, f64) {
        (self.epsilon, 1.0 / self.epsilon)
    }
}

/// Pointwise cone margin and maximizing index.
pub fn cone_margin_at(lambda: &[f64], psi: f64, alpha: usize) -> (f64, usize) {
    let n = lambda.len();
    let c = binomial(n, alpha) as f64;
    let star: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let (worst, k) = max_restricted(alpha, &star);
    (c / psi - worst, k)
}

/// Checks `C_n^α/ψ > S_{α;k}(λ^*(χ'))` for all `k` at every point, and cross-checks
/// the wedge form `n χ'^{n−1} > (n−α) ψ χ'^{n−α−1} ∧ ω^α` at sampled points.
pub fn cone_check(
    chi_prime: &HermitianField,
    psi: &ScalarField,
    alpha: usize,
    g: &HermitianField,
) -> Result<ConeReport> {
    let grid = Arc::clone(chi_prime.grid());
    let n = grid.n();
    if alpha == 0 || alpha > n {
        return Err(Error::OrderOutOfRange { k: alpha, n });
    }
    if !grid.same_lattice(psi.grid()) || !grid.same_lattice(g.grid()) {
        return Err(Error::GridMismatch);
    }
    let per_point: Vec<Option<[f64; 3]>> = (0..grid.len())
        .into_par_iter()
        .map(|p| pencil_eigenvalues(&chi_prime.at(p), &g.at(p)))
        .collect();
    let mut margin = Vec::with_capacity(grid.len());
    let mut worst_index = Vec::with_capacity(grid.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (p, eig) in per_point.iter().enumerate() {
        let eig = eig.ok_or_else(|| Error::NotPositiveDefinite {
            point: p,
            min_eigenvalue: g.at(p).hermitian_eigenvalues()[0],
        })?;
        let lambda = &eig[..n];
        if lambda[0] <= 0.0 {
            return Err(Error::Inadmissible {
                point: p,
                margin: lambda[0],
            });
        }
        lo = lo.min(lambda[0]);
        hi = hi.max(lambda[n - 1]);
        let (m, k) = cone_margin_at(lambda, psi.values()[p], alpha);
        margin.push(m);
        worst_index.push(k);
    }
    let margin = ScalarField::new(Arc::clone(&grid), margin)?;
    let min_margin_point = margin.argmin();
    let min_margin = margin.values()[min_margin_point];

    let c = binomial(n, alpha) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(WEDGE_SEED);
    let mut wedge_checks = Vec::with_capacity(WEDGE_SAMPLES);
    let mut points: Vec<usize> = (0..WEDGE_SAMPLES).map(|_| rng.gen_range(0..grid.len())).collect();
    points.push(min_margin_point);
    for p in points {
        let psi_p = psi.values()[p];
        let normalized = psi_p / c * margin.values()[p];
        let mu = wedge_cone_eigenvalue(&chi_prime.at(p), &g.at(p), psi_p, alpha)?;
        let agree = (mu > 0.0) == (normalized > 0.0) && (mu - normalized).abs() <= 1e-9 * (1.0 + mu.abs());
        wedge_checks.push(WedgeCheck {
            point: p,
            normalized_margin: normalized,
            wedge_eigenvalue: mu,
            agree,
        });
    }
    let wedge_agrees = wedge_checks.iter().all(|w| w.agree);
    Ok(ConeReport {
        holds: min_margin > 0.0,
        margin,
        worst_index,
        min_margin,
        min_margin_point,
        epsilon: lo.min(1.0 / hi),
        wedge_checks,
        wedge_agrees,
    })
}

/// Pointwise densities of `χ^n` and `χ^{n−α} ∧ ω^α` against the flat volume,
/// both divided by the common factor of `ω^n`.
fn wedge_densities(chi: &HermitianField, g: &HermitianField, alpha: usize) -> Result<Vec<(f64, f64)>> {
    let grid = chi.grid();
    let n = grid.n();
    if alpha == 0 || alpha > n {
        return Err(Error::OrderOutOfRange { k: alpha, n });
    }
    let c = binomial(n, alpha) as f64;
    let per_point: Vec<Option<(f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let gp = g.at(p);
            let eig = pencil_eigenvalues(&chi.at(p), &gp)?;
            let e = elementary_small(&eig[..n]);
            let vol = gp.det().re;
            Some((e[n] * vol, e[n - alpha] / c * vol))
        })
        .collect();
    per_point
        .into_iter()
        .enumerate()
        .map(|(p, v)| {
            v.ok_or_else(|| Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: g.at(p).hermitian_eigenvalues()[0],
            })
        })
        .collect()
}

/// `c = ∫ χ^n / ∫ χ^{n−α} ∧ ω^α` by grid quadrature.
pub fn kahler_constant(chi: &HermitianField, g: &HermitianField, alpha: usize) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in wedge_densities(chi, g, alpha)? {
        num += a;
        den += b;
    }
    if den.abs() <= f64::EPSILON * num.abs().max(1.0) * chi.grid().len() as f64 {
        return Err(Error::VanishingDenominator("kahler constant"));
    }
    Ok(num / den)
}

/// Grid means of `χ_u^n` and `ψ e^b χ_u^{n−α} ∧ ω^α`; equal when `χ_u` solves the equation.
pub fn quadrature_identity(
    chi_u: &HermitianField,
    g: &HermitianField,
    psi: &ScalarField,
    b: f64,
    alpha: usize,
) -> Result<(f64, f64)> {
    if !chi_u.grid().same_lattice(psi.grid()) {
        return Err(Error::GridMismatch);
    }
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for ((a, d), p) in wedge_densities(chi_u, g, alpha)?.into_iter().zip(psi.values()) {
        lhs += a;
        rhs += p * b.exp() * d;
    }
    let len = psi.len() as f64;
    Ok((lhs / len, rhs / len))
}

/// Removes Fourier modes above 2/3 of the Nyquist frequency on every axis.
pub fn spectral_smooth(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let cutoff = grid.m() as f64 / 3.0;
    let mut hat: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
    grid.fft_forward(&mut hat);
    hat.par_iter_mut().enumerate().for_each(|(p, v)| {
        let high = (0..grid.real_dim()).any(|a| grid.frequency(grid.axis_index(p, a)).abs() > cutoff);
        if high {
            *v = C64::new(0.0, 0.0);
        }
    });
    grid.fft_inverse(&mut hat);
    ScalarField::new(Arc::clone(grid), hat.iter().map(|v| v.re).collect()).expect("same grid")
}

/// Intermediate data for the first stage of the two-stage solve.
#[derive(Clone, Debug)]
pub struct Stage0 {
    pub psi0: ScalarField,
    /// Mean-zero representative of the subsolution potential.
    pub v: ScalarField,
    /// `φ_v` with `χ_v^n = φ_v χ_v^{n−α} ∧ ω^α`.
    pub varphi_v: ScalarField,
    /// `δ > 0`, i.e. `ψ_0` strictly dominates `max{ψ, φ_v}`.
    pub strict: bool,
    /// `sup (φ_v − ψ_0)`; nonpositive when `φ_v ≤ ψ_0` holds on the grid.
    pub varphi_excess: f64,
    pub cone: ConeReport,
}

fn psi0_for(base: &ScalarField, smooth: &ScalarField, delta: f64) -> ScalarField {
    let undershoot = base
        .values()
        .iter()
        .zip(smooth.values())
        .fold(0.0, |acc: f64, (b, s)| acc.max(b - s));
    smooth.shift(0.5 * delta + undershoot)
}

/// Builds `ψ_0 ≥ max{ψ, φ_v} + δ/2` (spectrally smoothed) and `v = u̲`.
pub fn build_stage0(ulbar: &ScalarField, psi: &ScalarField, delta: f64, data: &ProblemData) -> Result<Stage0> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
    }
    let v = ulbar.mean_zero();
    let chi_v = data.chi_u(&v)?;
    let cone = cone_check(&chi_v, psi, data.alpha, &data.g)?;
    if !cone.holds {
        return Err(Error::Hypothesis(format!(
            "cone condition fails for the subsolution (min margin {:e})",
            cone.min_margin
        )));
    }
    let varphi_v = varphi_of(&data.g, &chi_v, data.alpha)?;
    let base = psi.zip_map(&varphi_v, f64::max)?;
    let smooth = spectral_smooth(&base);

    let feasible = |d: f64| -> Result<Option<(ScalarField, ConeReport)>> {
        let psi0 = psi0_for(&base, &smooth, d);
        let report = cone_check(&chi_v, &psi0, data.alpha, &data.g)?;
        Ok(report.holds.then_some((psi0, report)))
    };
    let (psi0, cone) = match feasible(delta)? {
        Some(found) => found,
        None => {
            if feasible(0.0)?.is_none() {
                return Err(Error::DeltaTooLarge { max_feasible: 0.0 });
            }
            let (mut lo, mut hi) = (0.0, delta);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid)?.is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Err(Error::DeltaTooLarge { max_feasible: lo });
        }
    };
    let varphi_excess = varphi_v
        .values()
        .iter()
        .zip(psi0.values())
        .fold(f64::NEG_INFINITY, |acc, (a, b)| acc.max(a - b));
    Ok(Stage0 {
        psi0,
        v,
        varphi_v,
        strict: delta > 0.0,
        varphi_excess,
        cone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DiffMode, TorusGrid};
    use crate::tensor::{CMat, Role};

    #[test]
    fn hand_margin() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let id = HermitianField::identity(&grid, Role::Metric);
        let psi = ScalarField::constant(&grid, 4.0 / 3.0);
        let r = cone_check(&id, &psi, 1, &id).unwrap();
        assert!(r.holds);
        assert!((r.min_margin - 0.5).abs() < 1e-15);
        assert!(r.wedge_agrees);
        assert_eq!(r.epsilon, 1.0);
    }

    #[test]
    fn top_order_always_holds() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let id = HermitianField::identity(&grid, Role::Metric);
        let psi = ScalarField::constant(&grid, 1e6);
        let r = cone_check(&id, &psi, 2, &id).unwrap();
        assert!(r.holds && r.wedge_agrees);
    }

    #[test]
    fn kahler_constant_homogeneity() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let id = HermitianField::identity(&grid, Role::Metric);
        assert!((kahler_constant(&id, &id, 1).unwrap() - 1.0).abs() < 1e-15);
        let two = HermitianField::uniform(&grid, Role::Chi, CMat::identity(2).scale(2.0)).unwrap();
        assert!((kahler_constant(&two, &id, 1).unwrap() - 2.0).abs() < 1e-14);
    }
}

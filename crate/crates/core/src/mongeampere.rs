//! The equation `χ_u^n = ψ χ_u^{n−α} ∧ ω^α` in its scalar form
//! `S_α(χ_u^{-1}) = C_n^α / ψ`: residuals, linearization and manufactured data.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::sympoly::{binomial, elementary_small, s_alpha_inv_with_gradient};
use crate::tensor::{pack, pencil_eigenvalues, CMat, HermitianField, Role};

/// Metric, reference form, right-hand side and the order α.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub g: HermitianField,
    pub chi: HermitianField,
    pub psi: ScalarField,
    pub alpha: usize,
    varphi: Option<ScalarField>,
}

impl ProblemData {
    /// Validates the inputs and derives `φ` when `χ` is positive.
    pub fn new(g: HermitianField, chi: HermitianField, psi: ScalarField, alpha: usize) -> Result<Self> {
        let n = g.n();
        if alpha == 0 || alpha > n {
            return Err(Error::OrderOutOfRange { k: alpha, n });
        }
        if !g.grid().same_lattice(chi.grid()) || !g.grid().same_lattice(psi.grid()) {
            return Err(Error::GridMismatch);
        }
        g.check_positive()?;
        check_positive_field("psi", &psi)?;
        let varphi = varphi_of(&g, &chi, alpha).ok();
        Ok(Self {
            g: g.with_role(Role::Metric),
            chi: chi.with_role(Role::Chi),
            psi,
            alpha,
            varphi,
        })
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.g.grid()
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    /// `C_n^α`.
    pub fn binomial(&self) -> f64 {
        binomial(self.n(), self.alpha) as f64
    }

    /// `φ` with `χ^n = φ χ^{n−α} ∧ ω^α`; defined only when `χ` is positive.
    pub fn varphi(&self) -> Result<&ScalarField> {
        self.varphi
            .as_ref()
            .ok_or_else(|| Error::Hypothesis("chi is not positive, so varphi is undefined".into()))
    }

    pub fn with_psi(&self, psi: ScalarField) -> Result<Self> {
        Self::new(self.g.clone(), self.chi.clone(), psi, self.alpha)
    }

    pub fn with_chi(&self, chi: HermitianField) -> Result<Self> {
        Self::new(self.g.clone(), chi, self.psi.clone(), self.alpha)
    }

    /// `χ_u = χ + ∂∂̄u`.
    pub fn chi_u(&self, u: &ScalarField) -> Result<HermitianField> {
        let mut x = self.grid().hessian_complex(u)?;
        x.add_assign(&self.chi)?;
        Ok(x.with_role(Role::ChiU))
    }
}

fn check_positive_field(what: &'static str, f: &ScalarField) -> Result<()> {
    match f.values().iter().position(|&v| v.is_nan() || v <= 0.0) {
        None => Ok(()),
        Some(point) => Err(Error::NonPositive {
            what,
            point,
            value: f.values()[point],
        }),
    }
}

/// `φ = C_n^α S_n(λ)/S_{n−α}(λ)` with `λ` the eigenvalues of `χ` relative to `g`.
pub fn varphi_of(g: &HermitianField, chi: &HermitianField, alpha: usize) -> Result<ScalarField> {
    ratio_field(chi, g, alpha)
}

/// `C_n^α / S_α(X^{-1})` pointwise; the wedge ratio `X^n / (X^{n−α} ∧ ω^α)`.
pub fn ratio_field(x: &HermitianField, g: &HermitianField, alpha: usize) -> Result<ScalarField> {
    let c = binomial(x.n(), alpha) as f64;
    let vals: Vec<Result<f64>> = (0..x.grid().len())
        .into_par_iter()
        .map(|p| {
            let xp = x.at(p);
            match s_alpha_inv_with_gradient(&xp, &g.at(p), alpha) {
                Ok((s, _)) if s > 0.0 => Ok(c / s),
                Ok(_) | Err(Error::NotPositiveDefinite { .. }) => Err(Error::Inadmissible {
                    point: p,
                    margin: point_margin(&xp, &g.at(p)),
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    ScalarField::new(Arc::clone(x.grid()), vals.into_iter().collect::<Result<_>>()?)
}

fn point_margin(x: &CMat, g: &CMat) -> f64 {
    pencil_eigenvalues(x, g).map_or(f64::NAN, |v| v[0])
}

/// Pointwise log of the equation's left side and the admissibility margin.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `log S_α(λ^*(χ_u))`.
    pub log_s: Vec<f64>,
    /// Infimum of the smallest relative eigenvalue of `χ_u`.
    pub margin: f64,
    pub margin_point: usize,
}

fn margins(x: &HermitianField, g: &HermitianField) -> Result<(f64, usize)> {
    let per_point: Vec<f64> = (0..x.grid().len())
        .into_par_iter()
        .map(|p| point_margin(&x.at(p), &g.at(p)))
        .collect();
    let mut best = (f64::INFINITY, 0);
    for (p, &m) in per_point.iter().enumerate() {
        if m.is_nan() {
            return Err(Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: g.at(p).hermitian_eigenvalues()[0],
            });
        }
        if m < best.0 {
            best = (m, p);
        }
    }
    Ok(best)
}

/// Admissibility margin of `χ_u` (negative when inadmissible).
pub fn margin_of(u: &ScalarField, data: &ProblemData) -> Result<f64> {
    Ok(margins(&data.chi_u(u)?, &data.g)?.0)
}

/// Evaluates `log S_α(χ_u^{-1})`; errors if `χ_u` is not positive.
pub fn evaluate_x(x: &HermitianField, data: &ProblemData) -> Result<Evaluation> {
    let (n, alpha) = (data.n(), data.alpha);
    // S_α(λ^*) = S_{n−α}(λ)/S_n(λ) with λ the relative eigenvalues of χ_u
    let per_point: Vec<(f64, f64)> = (0..x.grid().len())
        .into_par_iter()
        .map(|p| match pencil_eigenvalues(&x.at(p), &data.g.at(p)) {
            Some(lambda) => {
                let e = elementary_small(&lambda[..n]);
                (lambda[0], (e[n - alpha] / e[n]).ln())
            }
            None => (f64::NAN, f64::NAN),
        })
        .collect();
    let mut best = (f64::INFINITY, 0);
    for (p, &(m, _)) in per_point.iter().enumerate() {
        if m.is_nan() {
            return Err(Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: data.g.at(p).hermitian_eigenvalues()[0],
            });
        }
        if m < best.0 {
            best = (m, p);
        }
    }
    let (margin, margin_point) = best;
    if margin <= 0.0 {
        return Err(Error::Inadmissible {
            point: margin_point,
            margin,
        });
    }
    Ok(Evaluation {
        log_s: per_point.into_iter().map(|(_, l)| l).collect(),
        margin,
        margin_point,
    })
}

/// The pair of right-hand sides joined by a continuity family
/// `target^t · start^{1−t} · e^b`.
#[derive(Clone, Debug)]
pub struct Family {
    pub log_start: Vec<f64>,
    pub log_target: Vec<f64>,
}

impl Family {
    pub fn new(start: &ScalarField, target: &ScalarField) -> Result<Self> {
        check_positive_field("start right-hand side", start)?;
        check_positive_field("target right-hand side", target)?;
        if !start.grid().same_lattice(target.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            log_start: start.values().iter().map(|v| v.ln()).collect(),
            log_target: target.values().iter().map(|v| v.ln()).collect(),
        })
    }

    /// The family from `φ` to `ψ`.
    pub fn standard(data: &ProblemData) -> Result<Self> {
        Self::new(data.varphi()?, &data.psi)
    }

    /// `sup |ln start − ln target|`.
    pub fn log_gap(&self) -> f64 {
        self.log_start
            .iter()
            .zip(&self.log_target)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// `t ln target + (1 − t) ln start − ln C`, pointwise.
    pub fn offset(&self, t: f64, log_binomial: f64) -> Vec<f64> {
        self.log_start
            .iter()
            .zip(&self.log_target)
            .map(|(s, g)| t * g + (1.0 - t) * s - log_binomial)
            .collect()
    }
}

/// `r = log S_α(χ_u^{-1}) − log C_n^α + t log ψ + (1 − t) log φ + b`.
pub fn residual(u: &ScalarField, b: f64, t: f64, data: &ProblemData) -> Result<ScalarField> {
    residual_in_family(u, b, t, data, &Family::standard(data)?)
}

pub fn residual_in_family(
    u: &ScalarField,
    b: f64,
    t: f64,
    data: &ProblemData,
    family: &Family,
) -> Result<ScalarField> {
    let eval = evaluate_x(&data.chi_u(u)?, data)?;
    let offset = family.offset(t, data.binomial().ln());
    let r = eval
        .log_s
        .iter()
        .zip(&offset)
        .map(|(l, o)| l + o + b)
        .collect();
    ScalarField::new(Arc::clone(u.grid()), r)
}

/// `η ↦ d/ds log F(u + sη)` with `F(u) = S_n(χ_u)/S_{n−α}(χ_u)`.
///
/// `coeff` holds `F^{ij̄}/F` arranged so that the operator is
/// `Lη = tr(coeff · ∂∂̄η) = Σ coeff_{ji} ∂_i∂̄_j η`; `scale` is `F`.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub coeff: HermitianField,
    pub scale: ScalarField,
}

impl LinearizedOperator {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.coeff.grid()
    }

    pub fn apply(&self, eta: &ScalarField) -> Result<ScalarField> {
        let grid = self.grid();
        if !grid.same_lattice(eta.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; eta.len()];
        if grid.mode() == crate::grid::DiffMode::Spectral {
            let mut hat: Vec<_> = eta.to_complex().into_values();
            grid.fft_forward(&mut hat);
            let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); hat.len()];
            grid.contract_hessian_spectrum(&hat, &self.coeff.to_packed(), &mut buf, &mut out);
        } else {
            let h = grid.hessian_complex(eta)?;
            out.par_iter_mut()
                .enumerate()
                .for_each(|(p, o)| *o = crate::sympoly::pairing(&self.coeff.at(p), &h.at(p)));
        }
        ScalarField::new(Arc::clone(eta.grid()), out)
    }

    /// Smallest eigenvalue of `coeff` over the grid.
    pub fn min_ellipticity(&self) -> f64 {
        (0..self.grid().len())
            .into_par_iter()
            .map(|p| self.coeff.at(p).hermitian_eigenvalues()[0])
            .reduce(|| f64::INFINITY, f64::min)
    }
}

/// Assembles the linearization from the frame-invariant gradient of `S_α(X^{-1})`.
pub fn linearize_x(x: &HermitianField, data: &ProblemData) -> Result<LinearizedOperator> {
    let grid = Arc::clone(x.grid());
    let n = grid.n();
    let nn = n * n;
    let mut packed = vec![0.0; grid.len() * nn];
    let mut scale = vec![0.0; grid.len()];
    packed
        .par_chunks_mut(nn)
        .zip(scale.par_iter_mut())
        .enumerate()
        .try_for_each(|(p, (out, f))| -> Result<()> {
            let (xp, gp) = (x.at(p), data.g.at(p));
            let (s, d) = match s_alpha_inv_with_gradient(&xp, &gp, data.alpha) {
                Err(Error::NotPositiveDefinite { .. }) => {
                    return Err(Error::Inadmissible {
                        point: p,
                        margin: point_margin(&xp, &gp),
                    })
                }
                r => r?,
            };
            pack(&d.scale(-1.0 / s), out);
            *f = 1.0 / s;
            Ok(())
        })?;
    Ok(LinearizedOperator {
        coeff: HermitianField::from_packed(Arc::clone(&grid), Role::Omega, packed),
        scale: ScalarField::new(grid, scale)?,
    })
}

pub fn linearize(u: &ScalarField, data: &ProblemData) -> Result<LinearizedOperator> {
    linearize_x(&data.chi_u(u)?, data)
}

/// Builds `ψ = C_n^α S_n/S_{n−α}(χ_{u*})` so that `u*` solves the equation with `b = 0`.
///
/// The Hessian of `u*` is always taken spectrally so that the manufactured
/// problem is the continuum one, whichever backend later solves it.
pub fn manufacture(
    u_star: &ScalarField,
    g: &HermitianField,
    chi: &HermitianField,
    alpha: usize,
) -> Result<ProblemData> {
    let spectral = u_star.grid().with_mode(crate::grid::DiffMode::Spectral);
    let h = spectral.hessian_complex(&u_star.on_grid(&spectral)?)?;
    let x = chi.add(&h)?;
    let psi = ratio_field(&x, g, alpha)?;
    ProblemData::new(g.clone(), chi.clone(), psi.on_grid(u_star.grid())?, alpha)
}

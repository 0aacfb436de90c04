//! Brute-force reference computations, kept independent of the main solver path:
//! exterior algebra for wedge products, subset sums, finite differences and a
//! dense direct solve of the linearized system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{DiffMode, ScalarField};
use crate::tensor::{CMat, HermitianField};

/// A differential form on `ℂⁿ` (n ≤ 3) with constant coefficients.
///
/// Generators `dz^1..dz^n` are numbered `0..n` and `dz̄^1..dz̄^n` are numbered
/// `n..2n`; a basis monomial is a strictly increasing multi-index, stored as a
/// bitmask.
#[derive(Clone, Debug)]
pub struct WedgeForm {
    n: usize,
    coeffs: [C64; 64],
}

impl WedgeForm {
    pub fn zero(n: usize) -> Result<Self> {
        if n > 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        Ok(Self {
            n,
            coeffs: [C64::new(0.0, 0.0); 64],
        })
    }

    pub fn one(n: usize) -> Result<Self> {
        let mut f = Self::zero(n)?;
        f.coeffs[0] = C64::new(1.0, 0.0);
        Ok(f)
    }

    /// `Σ A_{ij} dz^i ∧ dz̄^j` (the factor `√−1/2` is dropped; only ratios of
    /// forms of equal degree are compared).
    pub fn from_matrix(a: &CMat) -> Result<Self> {
        let n = a.dim();
        let mut f = Self::zero(n)?;
        for i in 0..n {
            for j in 0..n {
                f.coeffs[(1 << i) | (1 << (n + j))] = a[(i, j)];
            }
        }
        Ok(f)
    }

    /// The monomial `dz^i ∧ dz̄^j`.
    pub fn dz_dzbar(n: usize, i: usize, j: usize) -> Result<Self> {
        let mut f = Self::zero(n)?;
        f.coeffs[(1 << i) | (1 << (n + j))] = C64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn wedge(&self, other: &WedgeForm) -> WedgeForm {
        let mut out = WedgeForm {
            n: self.n,
            coeffs: [C64::new(0.0, 0.0); 64],
        };
        let size = 1usize << (2 * self.n);
        for a in 0..size {
            if self.coeffs[a] == C64::new(0.0, 0.0) {
                continue;
            }
            for b in 0..size {
                if a & b != 0 || other.coeffs[b] == C64::new(0.0, 0.0) {
                    continue;
                }
                out.coeffs[a | b] += merge_sign(a, b) * self.coeffs[a] * other.coeffs[b];
            }
        }
        out
    }

    pub fn power(&self, k: usize) -> WedgeForm {
        let mut acc = WedgeForm::one(self.n).expect("dimension already checked");
        for _ in 0..k {
            acc = acc.wedge(self);
        }
        acc
    }

    pub fn scale(&self, s: f64) -> WedgeForm {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn sub(&self, other: &WedgeForm) -> WedgeForm {
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a -= b;
        }
        out
    }

    /// Coefficient of the monomial `dz^1 ∧ … ∧ dz^n ∧ dz̄^1 ∧ … ∧ dz̄^n`.
    pub fn top_coefficient(&self) -> C64 {
        self.coeffs[(1 << (2 * self.n)) - 1]
    }
}

/// Sign of reordering `monomial(a) ∧ monomial(b)` into increasing order.
fn merge_sign(a: usize, b: usize) -> f64 {
    let mut inversions = 0;
    let mut rest = b;
    while rest != 0 {
        let y = rest.trailing_zeros();
        inversions += (a >> (y + 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `X^n / (X^{n−α} ∧ ω^α)` by literal form multiplication.
pub fn wedge_ratio(x: &CMat, g: &CMat, alpha: usize) -> Result<f64> {
    let n = x.dim();
    if n > 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if alpha > n {
        return Err(Error::OrderOutOfRange { k: alpha, n });
    }
    let xf = WedgeForm::from_matrix(x)?;
    let gf = WedgeForm::from_matrix(g)?;
    let num = xf.power(n).top_coefficient();
    let den = xf.power(n - alpha).wedge(&gf.power(alpha)).top_coefficient();
    if den.norm() == 0.0 {
        return Err(Error::VanishingDenominator("wedge ratio"));
    }
    Ok((num / den).re)
}

/// Hermitian matrix `Q_{ij}` of an `(n−1, n−1)`-form `Ψ`, defined by pairing with
/// `dz^j ∧ dz̄^i` and normalized by the sign of `ω_0^{n−1}` for the Euclidean `ω_0`,
/// so that positive forms give positive definite matrices.
pub fn pairing_matrix(psi: &WedgeForm) -> Result<CMat> {
    let n = psi.n;
    let reference = WedgeForm::from_matrix(&CMat::identity(n))?
        .power(n - 1)
        .wedge(&WedgeForm::dz_dzbar(n, 0, 0)?)
        .top_coefficient()
        .re
        .signum();
    let mut q = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = psi.wedge(&WedgeForm::dz_dzbar(n, j, i)?).top_coefficient() * reference;
        }
    }
    Ok(q)
}

/// The wedge form of the cone condition at one point: returns the smallest
/// generalized eigenvalue of `(Q_L − Q_R, Q_L)` where `Q_L` pairs `n χ'^{n−1}` and
/// `Q_R` pairs `(n−α) ψ χ'^{n−α−1} ∧ ω^α`. The condition holds iff it is positive.
pub fn wedge_cone_eigenvalue(chi: &CMat, g: &CMat, psi: f64, alpha: usize) -> Result<f64> {
    let n = chi.dim();
    if alpha > n || alpha == 0 {
        return Err(Error::OrderOutOfRange { k: alpha, n });
    }
    let cf = WedgeForm::from_matrix(chi)?;
    let gf = WedgeForm::from_matrix(g)?;
    let lhs = cf.power(n - 1).scale(n as f64);
    let rhs = if alpha == n {
        WedgeForm::zero(n)?
    } else {
        cf.power(n - alpha - 1)
            .wedge(&gf.power(alpha))
            .scale((n - alpha) as f64 * psi)
    };
    let ql = pairing_matrix(&lhs)?;
    let qd = pairing_matrix(&lhs.sub(&rhs))?;
    let l = ql.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        point: 0,
        min_eigenvalue: ql.hermitian_eigenvalues()[0],
    })?;
    let li = l.lower_inverse();
    Ok((li * qd * li.adjoint()).hermitize().hermitian_eigen().0[0])
}

/// `S_k(λ)` as an explicit sum over `k`-subsets.
pub fn subset_elementary(k: usize, lambda: &[f64]) -> f64 {
    let len = lambda.len();
    (0usize..1 << len)
        .filter(|s| s.count_ones() as usize == k)
        .map(|s| {
            (0..len)
                .filter(|i| s & (1 << i) != 0)
                .map(|i| lambda[i])
                .product::<f64>()
        })
        .sum()
}

/// `S_k` with the entries listed in `drop` set to zero, by subset enumeration.
pub fn subset_restricted(k: usize, lambda: &[f64], drop: &[usize]) -> f64 {
    let zeroed: Vec<f64> = lambda
        .iter()
        .enumerate()
        .map(|(i, &l)| if drop.contains(&i) { 0.0 } else { l })
        .collect();
    subset_elementary(k, &zeroed)
}

/// Diagonal-frame gradient entries `−S_{α−1;i}(λ^*) (λ^*_i)^2` for `λ^*` the
/// eigenvalues of `X^{-1}`.
pub fn diagonal_frame_gradient(lambda_star: &[f64], alpha: usize) -> Vec<f64> {
    (0..lambda_star.len())
        .map(|i| -subset_restricted(alpha - 1, lambda_star, &[i]) * lambda_star[i] * lambda_star[i])
        .collect()
}

/// Centered difference `(F(x + s h) − F(x − s h)) / (2s)`.
pub fn fd_directional<F>(f: F, s: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    Ok((f(s)? - f(-s)?) / (2.0 * s))
}

/// Richardson extrapolation of the centered difference with steps `s` and `s/2`.
pub fn fd_directional_richardson<F>(f: F, s: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let coarse = fd_directional(&f, s)?;
    let fine = fd_directional(&f, 0.5 * s)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Centered second difference `(F(s) − 2F(0) + F(−s)) / s²`.
pub fn second_difference<F>(f: F, s: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    Ok((f(s)? - 2.0 * f(0.0)? + f(-s)?) / (s * s))
}

/// Periodic first- and second-derivative matrices on `m` points of `[0, 1)`.
fn derivative_matrices(m: usize, mode: DiffMode) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut d1 = DMatrix::zeros(m, m);
    let mut d2 = DMatrix::zeros(m, m);
    let h = 2.0 * PI / m as f64;
    for j in 0..m {
        for k in 0..m {
            let diff = (j as isize - k as isize).rem_euclid(m as isize) as usize;
            match mode {
                DiffMode::Spectral => {
                    if diff == 0 {
                        d2[(j, k)] = (-PI * PI / (3.0 * h * h) - 1.0 / 6.0) * 4.0 * PI * PI;
                    } else {
                        let sign = if diff % 2 == 0 { 1.0 } else { -1.0 };
                        let x = diff as f64 * h / 2.0;
                        d1[(j, k)] = 0.5 * sign / x.tan() * 2.0 * PI;
                        d2[(j, k)] = -sign / (2.0 * x.sin().powi(2)) * 4.0 * PI * PI;
                    }
                }
                DiffMode::Central2 => {
                    let mf = m as f64;
                    if diff == 1 {
                        d1[(j, k)] = 0.5 * mf;
                        d2[(j, k)] = mf * mf;
                    } else if diff == m - 1 {
                        d1[(j, k)] = -0.5 * mf;
                        d2[(j, k)] = mf * mf;
                    } else if diff == 0 {
                        d2[(j, k)] = -2.0 * mf * mf;
                    }
                }
            }
        }
    }
    (d1, d2)
}

/// Kronecker product applying `ops[k].1` along real axis `ops[k].0` of a
/// `dims`-dimensional cube and the identity elsewhere.
fn along_axes(ops: &[(usize, &DMatrix<f64>)], m: usize, dims: usize) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for a in 0..dims {
        let factor = match ops.iter().find(|(axis, _)| *axis == a) {
            Some((_, op)) => (*op).clone(),
            None => DMatrix::identity(m, m),
        };
        out = out.kronecker(&factor);
    }
    out
}

/// Real matrices of `Re ∂_a∂̄_b` and `Im ∂_a∂̄_b` for every pair `a ≤ b`.
fn hessian_matrices(m: usize, n: usize, mode: DiffMode) -> Vec<(usize, usize, DMatrix<f64>, DMatrix<f64>)> {
    let dims = 2 * n;
    let (d1, d2) = derivative_matrices(m, mode);
    let mixed = |r: usize, s: usize| along_axes(&[(r, &d1), (s, &d1)], m, dims);
    let mut out = Vec::new();
    for a in 0..n {
        let (xa, ya) = (2 * a, 2 * a + 1);
        let diag = (along_axes(&[(xa, &d2)], m, dims) + along_axes(&[(ya, &d2)], m, dims)) * 0.25;
        let size = diag.nrows();
        out.push((a, a, diag, DMatrix::zeros(size, size)));
        for b in a + 1..n {
            let (xb, yb) = (2 * b, 2 * b + 1);
            let re = (mixed(xa, xb) + mixed(ya, yb)) * 0.25;
            let im = (mixed(xa, yb) - mixed(ya, xb)) * 0.25;
            out.push((a, b, re, im));
        }
    }
    out
}

/// Solution of the bordered system `L η + s = rhs`, `mean(η) = 0`, where
/// `L η = tr(coeff · ∂∂̄η)`.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    pub eta: ScalarField,
    pub s: f64,
}

/// Direct LU solve of the bordered linear system on a small grid.
pub fn dense_solve(coeff: &HermitianField, rhs: &ScalarField) -> Result<DenseSolution> {
    Ok(dense_solve_all(coeff, std::slice::from_ref(rhs))?.remove(0))
}

/// [`dense_solve`] for several right-hand sides sharing one factorization.
pub fn dense_solve_all(coeff: &HermitianField, rhs: &[ScalarField]) -> Result<Vec<DenseSolution>> {
    let grid = coeff.grid();
    let len = grid.len();
    if len > 4096 {
        return Err(Error::InvalidGrid(format!(
            "dense oracle limited to 4096 points, got {len}"
        )));
    }
    if rhs.iter().any(|r| !grid.same_lattice(r.grid())) {
        return Err(Error::GridMismatch);
    }
    let n = grid.n();
    let mats = hessian_matrices(grid.m(), n, grid.mode());
    let mut a = DMatrix::zeros(len + 1, len + 1);
    for (i, j, re, im) in &mats {
        for p in 0..len {
            let c = coeff.at(p)[(*i, *j)];
            // diagonal: c real; off-diagonal pairs contribute 2 Re(conj(c) H)
            let (wr, wi) = if i == j { (c.re, 0.0) } else { (2.0 * c.re, 2.0 * c.im) };
            for q in 0..len {
                a[(p, q)] += wr * re[(p, q)] + wi * im[(p, q)];
            }
        }
    }
    for p in 0..len {
        a[(p, len)] = 1.0;
        a[(len, p)] = 1.0;
    }
    let lu = a.lu();
    rhs.iter()
        .map(|r| {
            let mut b = DVector::zeros(len + 1);
            for p in 0..len {
                b[p] = r.values()[p];
            }
            let x = lu
                .solve(&b)
                .ok_or_else(|| Error::Singular("bordered operator is singular".into()))?;
            Ok(DenseSolution {
                eta: ScalarField::new(std::sync::Arc::clone(grid), x.as_slice()[..len].to_vec())?,
                s: x[len],
            })
        })
        .collect()
}

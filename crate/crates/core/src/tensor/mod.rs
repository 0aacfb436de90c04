//! Pointwise Hermitian linear algebra over grid fields.

mod mat;

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};

pub use mat::CMat;

/// What a Hermitian field represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "g")]
    Metric,
    #[serde(rename = "chi")]
    Chi,
    #[serde(rename = "X")]
    ChiU,
    #[serde(rename = "Omega")]
    Omega,
    #[serde(rename = "generic")]
    Generic,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Metric => "g",
            Role::Chi => "chi",
            Role::ChiU => "X",
            Role::Omega => "Omega",
            Role::Generic => "generic",
        }
    }
}

/// Offset of `(re, im)` of entry `(a, b)`, `a < b`, in the packed layout.
///
/// A packed matrix stores the `n` real diagonal entries first, then the
/// upper-triangular entries in order `(0,1), (0,2), (1,2)` as `(re, im)` pairs.
#[inline]
pub fn offdiag_slot(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    n + 2 * (a * (2 * n - a - 1) / 2 + (b - a - 1))
}

#[inline]
pub fn pack(m: &CMat, out: &mut [f64]) {
    let n = m.dim();
    for a in 0..n {
        out[a] = m[(a, a)].re;
    }
    for a in 0..n {
        for b in a + 1..n {
            let s = offdiag_slot(n, a, b);
            let v = m[(a, b)];
            out[s] = v.re;
            out[s + 1] = v.im;
        }
    }
}

#[inline]
pub fn unpack(n: usize, packed: &[f64]) -> CMat {
    let mut m = CMat::zeros(n);
    for a in 0..n {
        m[(a, a)] = C64::new(packed[a], 0.0);
    }
    for a in 0..n {
        for b in a + 1..n {
            let s = offdiag_slot(n, a, b);
            let v = C64::new(packed[s], packed[s + 1]);
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
    }
    m
}

/// Names of the packed components, e.g. `h00`, `re_h01`, `im_h01`.
pub fn component_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|a| format!("h{a}{a}")).collect();
    for a in 0..n {
        for b in a + 1..n {
            names.push(format!("re_h{a}{b}"));
            names.push(format!("im_h{a}{b}"));
        }
    }
    names
}

#[derive(Clone, Debug)]
enum Storage {
    Uniform(CMat),
    Varying(Vec<f64>),
}

/// A grid of `n × n` Hermitian matrices, Hermitian by construction.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: Arc<TorusGrid>,
    role: Role,
    storage: Storage,
}

impl HermitianField {
    /// Constant field; the matrix is Hermitized.
    pub fn uniform(grid: &Arc<TorusGrid>, role: Role, m: CMat) -> Result<Self> {
        if m.dim() != grid.n() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(grid),
            role,
            storage: Storage::Uniform(m.hermitize()),
        })
    }

    pub fn identity(grid: &Arc<TorusGrid>, role: Role) -> Self {
        Self::uniform(grid, role, CMat::identity(grid.n())).expect("dimension matches grid")
    }

    /// Field from packed per-point components (`n²` reals per point).
    pub fn from_packed(grid: Arc<TorusGrid>, role: Role, packed: Vec<f64>) -> Self {
        assert_eq!(packed.len(), grid.len() * grid.n() * grid.n());
        Self {
            grid,
            role,
            storage: Storage::Varying(packed),
        }
    }

    /// Samples a matrix-valued function of the real coordinates; results are Hermitized.
    pub fn from_fn<F>(grid: &Arc<TorusGrid>, role: Role, f: F) -> Self
    where
        F: Fn(&[f64]) -> CMat + Sync,
    {
        let n = grid.n();
        let dim = grid.real_dim();
        let mut packed = vec![0.0; grid.len() * n * n];
        packed
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(p, out)| {
                let mut x = [0.0; 6];
                grid.point(p, &mut x);
                pack(&f(&x[..dim]).hermitize(), out);
            });
        Self::from_packed(Arc::clone(grid), role, packed)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.storage, Storage::Uniform(_))
    }

    /// The matrix at flat point `p`.
    #[inline]
    pub fn at(&self, p: usize) -> CMat {
        match &self.storage {
            Storage::Uniform(m) => *m,
            Storage::Varying(v) => {
                let nn = self.n() * self.n();
                unpack(self.n(), &v[p * nn..(p + 1) * nn])
            }
        }
    }

    /// Packed per-point components, unless the storage is uniform.
    pub fn packed(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Varying(v) => Some(v),
            Storage::Uniform(_) => None,
        }
    }

    /// Packed components for every point (expands uniform storage).
    pub fn to_packed(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Varying(v) => v.clone(),
            Storage::Uniform(m) => {
                let nn = self.n() * self.n();
                let mut one = vec![0.0; nn];
                pack(m, &mut one);
                one.iter()
                    .copied()
                    .cycle()
                    .take(nn * self.grid.len())
                    .collect()
            }
        }
    }

    /// Pointwise map; outputs are Hermitized.
    pub fn map(&self, role: Role, f: impl Fn(usize, CMat) -> CMat + Sync) -> Self {
        let n = self.n();
        let nn = n * n;
        let mut packed = vec![0.0; self.grid.len() * nn];
        packed.par_chunks_mut(nn).enumerate().for_each(|(p, out)| {
            pack(&f(p, self.at(p)).hermitize(), out);
        });
        Self::from_packed(Arc::clone(&self.grid), role, packed)
    }

    fn check_lattice(&self, other: &HermitianField) -> Result<()> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self + s · other`, keeping the role of `self`.
    pub fn axpy(&self, s: f64, other: &HermitianField) -> Result<Self> {
        self.check_lattice(other)?;
        if let (Storage::Uniform(a), Storage::Uniform(b)) = (&self.storage, &other.storage) {
            return Self::uniform(&self.grid, self.role, *a + b.scale(s));
        }
        if let (Storage::Varying(a), Storage::Varying(b)) = (&self.storage, &other.storage) {
            let packed = a.par_iter().zip(b.par_iter()).map(|(x, y)| x + s * y).collect();
            return Ok(Self::from_packed(Arc::clone(&self.grid), self.role, packed));
        }
        let nn = self.n() * self.n();
        let packed = match (&self.storage, &other.storage) {
            (Storage::Uniform(a), Storage::Varying(b)) => {
                let mut one = vec![0.0; nn];
                pack(a, &mut one);
                b.par_chunks(nn)
                    .flat_map_iter(|c| c.iter().zip(&one).map(|(y, x)| x + s * y))
                    .collect()
            }
            (Storage::Varying(a), Storage::Uniform(b)) => {
                let mut one = vec![0.0; nn];
                pack(b, &mut one);
                a.par_chunks(nn)
                    .flat_map_iter(|c| c.iter().zip(&one).map(|(x, y)| x + s * y))
                    .collect()
            }
            _ => unreachable!(),
        };
        Ok(Self::from_packed(Arc::clone(&self.grid), self.role, packed))
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &HermitianField) -> Result<()> {
        self.check_lattice(other)?;
        let nn = self.n() * self.n();
        match (&mut self.storage, &other.storage) {
            (Storage::Varying(a), Storage::Uniform(b)) => {
                let mut one = vec![0.0; nn];
                pack(b, &mut one);
                a.par_chunks_mut(nn).for_each(|c| c.iter_mut().zip(&one).for_each(|(x, y)| *x += y));
            }
            (Storage::Varying(a), Storage::Varying(b)) => {
                a.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x += y);
            }
            _ => *self = self.add(other)?,
        }
        Ok(())
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        match &self.storage {
            Storage::Uniform(m) => Self {
                grid: Arc::clone(&self.grid),
                role: self.role,
                storage: Storage::Uniform(m.scale(s)),
            },
            Storage::Varying(v) => Self::from_packed(
                Arc::clone(&self.grid),
                self.role,
                v.iter().map(|x| x * s).collect(),
            ),
        }
    }

    /// Largest entry modulus over the grid.
    pub fn sup_abs(&self) -> f64 {
        match &self.storage {
            Storage::Uniform(m) => m.max_abs(),
            Storage::Varying(_) => (0..self.grid.len())
                .map(|p| self.at(p).max_abs())
                .fold(0.0, f64::max),
        }
    }

    /// Largest `|A − A†|` over the grid (zero by construction).
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|p| self.at(p).hermitian_defect())
            .fold(0.0, f64::max)
    }

    /// Grid mean of each entry.
    pub fn mean(&self) -> CMat {
        match &self.storage {
            Storage::Uniform(m) => *m,
            Storage::Varying(v) => {
                let nn = self.n() * self.n();
                let mut acc = vec![0.0; nn];
                for chunk in v.chunks(nn) {
                    for (a, x) in acc.iter_mut().zip(chunk) {
                        *a += x;
                    }
                }
                let len = self.grid.len() as f64;
                acc.iter_mut().for_each(|a| *a /= len);
                unpack(self.n(), &acc)
            }
        }
    }

    /// Verifies pointwise positive definiteness.
    pub fn check_positive(&self) -> Result<()> {
        let bad = (0..self.grid.len())
            .into_par_iter()
            .find_first(|&p| self.at(p).cholesky().is_none());
        match bad {
            None => Ok(()),
            Some(point) => Err(Error::NotPositiveDefinite {
                point,
                min_eigenvalue: self.at(point).hermitian_eigenvalues()[0],
            }),
        }
    }
}

/// Eigen-decomposition of the pencil `(x, g)`.
///
/// Returns ascending generalized eigenvalues and `P` with `P† g P = I` and
/// `P† x P = diag(λ)`.
pub fn pencil_eigen(x: &CMat, g: &CMat) -> Option<([f64; 3], CMat)> {
    let l = g.cholesky()?;
    let li = l.lower_inverse();
    let a = (li * *x * li.adjoint()).hermitize();
    let (vals, v) = a.hermitian_eigen();
    Some((vals, li.adjoint() * v))
}

/// Ascending eigenvalues of `g^{-1/2} x g^{-1/2}`.
#[inline]
pub fn pencil_eigenvalues(x: &CMat, g: &CMat) -> Option<[f64; 3]> {
    if x.dim() == 2 {
        return pencil_eigenvalues_2(x, g);
    }
    let l = g.cholesky()?;
    let li = l.lower_inverse();
    Some((li * *x * li.adjoint()).hermitize().hermitian_eigenvalues())
}

/// Roots of `det(x − λ g) = 0` for 2×2 Hermitian `x` and positive `g`.
///
/// Reduces to `A = L^{-1} x L^{-†}` with `g = L L†`, whose discriminant
/// `((a00 − a11)/2)² + |a01|²` has no cancellation near degenerate pairs.
#[inline]
fn pencil_eigenvalues_2(x: &CMat, g: &CMat) -> Option<[f64; 3]> {
    let (g00, g11, g01) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)]);
    let det_g = g00 * g11 - g01.norm_sqr();
    if !(g00 > 0.0 && det_g > 0.0) {
        return None;
    }
    let (x00, x11, x01) = (x[(0, 0)].re, x[(1, 1)].re, x[(0, 1)]);
    // second row of L^{-1} is (c, 1)/l11 with c = −g10/g00 and l11² = det g/g00
    let c = -g01.conj() / g00;
    let l11_sq = det_g / g00;
    let a00 = x00 / g00;
    let a11 = (c.norm_sqr() * x00 + x11 + 2.0 * (c * x01).re) / l11_sq;
    let a01 = (x00 * c.conj() + x01) / (g00 * l11_sq).sqrt();
    let mean = 0.5 * (a00 + a11);
    let radius = (0.25 * (a00 - a11).powi(2) + a01.norm_sqr()).sqrt();
    let det = (x00 * x11 - x01.norm_sqr()) / det_g;
    let big = if mean >= 0.0 { mean + radius } else { mean - radius };
    let small = if big == 0.0 { 0.0 } else { det / big };
    let (lo, hi) = if big >= small { (small, big) } else { (big, small) };
    Some([lo, hi, 0.0])
}

/// Per-point sorted relative eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectrumField {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl SpectrumField {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    /// Ascending eigenvalues at point `p`.
    pub fn at(&self, p: usize) -> &[f64] {
        let n = self.grid.n();
        &self.values[p * n..(p + 1) * n]
    }

    /// The `k`-th smallest eigenvalue as a scalar field.
    pub fn component(&self, k: usize) -> ScalarField {
        let n = self.grid.n();
        let data = self.values.iter().skip(k).step_by(n).copied().collect();
        ScalarField::new(Arc::clone(&self.grid), data).expect("length matches grid")
    }
}

fn metric_error(g: &HermitianField, p: usize) -> Error {
    Error::NotPositiveDefinite {
        point: p,
        min_eigenvalue: g.at(p).hermitian_eigenvalues()[0],
    }
}

/// Generalized eigenvalues of `(x, g)` at every point.
pub fn rel_eigen(x: &HermitianField, g: &HermitianField) -> Result<SpectrumField> {
    x.check_lattice(g)?;
    let n = x.n();
    let len = x.grid.len();
    let per_point: Vec<Option<[f64; 3]>> = (0..len)
        .into_par_iter()
        .map(|p| pencil_eigenvalues(&x.at(p), &g.at(p)))
        .collect();
    let mut values = Vec::with_capacity(len * n);
    for (p, v) in per_point.into_iter().enumerate() {
        let v = v.ok_or_else(|| metric_error(g, p))?;
        values.extend_from_slice(&v[..n]);
    }
    Ok(SpectrumField {
        grid: Arc::clone(&x.grid),
        values,
    })
}

/// Smallest relative eigenvalue at each point.
pub fn margin_field(x: &HermitianField, g: &HermitianField) -> Result<ScalarField> {
    x.check_lattice(g)?;
    let per_point: Vec<Option<f64>> = (0..x.grid.len())
        .into_par_iter()
        .map(|p| pencil_eigenvalues(&x.at(p), &g.at(p)).map(|v| v[0]))
        .collect();
    let mut data = Vec::with_capacity(per_point.len());
    for (p, v) in per_point.into_iter().enumerate() {
        data.push(v.ok_or_else(|| metric_error(g, p))?);
    }
    ScalarField::new(Arc::clone(&x.grid), data)
}

/// Infimum over the grid of the smallest relative eigenvalue.
pub fn min_margin(x: &HermitianField, g: &HermitianField) -> Result<f64> {
    Ok(margin_field(x, g)?.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DiffMode;

    fn grid() -> Arc<TorusGrid> {
        TorusGrid::new(2, 8, DiffMode::Spectral).unwrap()
    }

    #[test]
    fn packing_roundtrip() {
        let m = CMat::from_rows(
            3,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.1, 0.2),
                C64::new(0.3, 0.4),
                C64::new(0.1, -0.2),
                C64::new(2.0, 0.0),
                C64::new(0.5, 0.6),
                C64::new(0.3, -0.4),
                C64::new(0.5, -0.6),
                C64::new(3.0, 0.0),
            ],
        );
        let mut buf = [0.0; 9];
        pack(&m, &mut buf);
        assert_eq!(unpack(3, &buf), m);
        assert_eq!(component_names(2), ["h00", "h11", "re_h01", "im_h01"]);
    }

    #[test]
    fn diagonal_pencil() {
        let g = grid();
        let x = HermitianField::uniform(&g, Role::ChiU, CMat::from_real_diag(&[2.0, 3.0])).unwrap();
        let id = HermitianField::identity(&g, Role::Metric);
        let s = rel_eigen(&x, &id).unwrap();
        assert_eq!(s.at(0), &[2.0, 3.0]);
        assert_eq!(min_margin(&id, &id).unwrap(), 1.0);
    }

    #[test]
    fn closed_form_pencil_near_degenerate() {
        let mut g = CMat::identity(2).scale(1.3);
        g[(0, 1)] = C64::new(0.2, -0.1);
        g[(1, 0)] = C64::new(0.2, 0.1);
        for eps in [1e-3, 1e-6, 1e-9] {
            let mut x = g.scale(0.8);
            x[(0, 0)] += C64::new(eps, 0.0);
            x[(0, 1)] += C64::new(0.0, eps);
            x[(1, 0)] -= C64::new(0.0, eps);
            let fast = pencil_eigenvalues_2(&x, &g).unwrap();
            let l = g.cholesky().unwrap().lower_inverse();
            let slow = (l * x * l.adjoint()).hermitize().hermitian_eigenvalues();
            for i in 0..2 {
                assert!((fast[i] - slow[i]).abs() < 1e-14, "eps={eps}: {fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn single_bad_point() {
        let g = grid();
        let x = HermitianField::from_fn(&g, Role::ChiU, |x| {
            if x.iter().all(|&c| c == 0.0) {
                CMat::from_real_diag(&[1.0, -0.1])
            } else {
                CMat::identity(2)
            }
        });
        let id = HermitianField::identity(&g, Role::Metric);
        assert!((min_margin(&x, &id).unwrap() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn metric_must_be_positive() {
        let g = grid();
        let bad = HermitianField::uniform(&g, Role::Metric, CMat::from_real_diag(&[1.0, -2.0])).unwrap();
        let id = HermitianField::identity(&g, Role::ChiU);
        match rel_eigen(&id, &bad) {
            Err(Error::NotPositiveDefinite { point, min_eigenvalue }) => {
                assert_eq!(point, 0);
                assert_eq!(min_eigenvalue, -2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pencil_frame() {
        let x = CMat::from_rows(
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.3, 0.4),
                C64::new(0.3, -0.4),
                C64::new(1.0, 0.0),
            ],
        );
        let g = CMat::from_rows(
            2,
            &[
                C64::new(1.5, 0.0),
                C64::new(0.1, -0.2),
                C64::new(0.1, 0.2),
                C64::new(0.8, 0.0),
            ],
        );
        let (vals, p) = pencil_eigen(&x, &g).unwrap();
        assert!((p.adjoint() * g * p - CMat::identity(2)).max_abs() < 1e-14);
        assert!((p.adjoint() * x * p - CMat::from_real_diag(&vals[..2])).max_abs() < 1e-14);
        let fast = pencil_eigenvalues(&x, &g).unwrap();
        assert!((fast[0] - vals[0]).abs() < 1e-14);
    }
}

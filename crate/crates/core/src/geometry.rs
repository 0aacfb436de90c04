//! Chern connection of a Hermitian metric field, metric traces and the Laplacian.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Derivative, DiffMode, ScalarField, TorusGrid};
use crate::sympoly::hermitian_inverse;
use crate::tensor::{CMat, HermitianField};

/// Christoffel symbols, torsion and curvature of the Chern connection.
///
/// `gamma(p, i, l, j) = Γ^i_{lj}`, `torsion(p, k, i, j) = T^k_{ij}`,
/// `curvature(p, i, j, k, l) = R_{i j̄ k l̄}`.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    grid: Arc<TorusGrid>,
    gamma: Vec<C64>,
    torsion: Vec<C64>,
    curvature: Vec<C64>,
    curvature_metric: Vec<C64>,
    discrepancy: f64,
}

impl ConnectionData {
    fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    #[inline]
    fn idx3(&self, p: usize, a: usize, b: usize, c: usize) -> usize {
        let n = self.n();
        ((p * n + a) * n + b) * n + c
    }

    #[inline]
    fn idx4(&self, p: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
        let n = self.n();
        (((p * n + a) * n + b) * n + c) * n + d
    }

    pub fn gamma(&self, p: usize, i: usize, l: usize, j: usize) -> C64 {
        self.gamma[self.idx3(p, i, l, j)]
    }

    pub fn torsion(&self, p: usize, k: usize, i: usize, j: usize) -> C64 {
        self.torsion[self.idx3(p, k, i, j)]
    }

    /// Curvature from the derivative of the connection coefficients.
    pub fn curvature(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.curvature[self.idx4(p, i, j, k, l)]
    }

    /// Curvature from the two-term metric expression.
    pub fn curvature_from_metric(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.curvature_metric[self.idx4(p, i, j, k, l)]
    }

    /// Largest disagreement between the two curvature expressions.
    pub fn discrepancy(&self) -> f64 {
        self.discrepancy
    }

    pub fn gamma_sup(&self) -> f64 {
        sup_norm(&self.gamma)
    }

    pub fn torsion_sup(&self) -> f64 {
        sup_norm(&self.torsion)
    }

    pub fn curvature_sup(&self) -> f64 {
        sup_norm(&self.curvature)
    }

    /// `max |R_{ij̄kl̄} − conj(R_{jīlk̄})|`.
    pub fn curvature_symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for p in 0..self.grid.len() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let d = self.curvature(p, i, j, k, l) - self.curvature(p, j, i, l, k).conj();
                            worst = worst.max(d.norm());
                        }
                    }
                }
            }
        }
        worst
    }
}

fn sup_norm(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Entry `(a, b)` of a Hermitian field as a complex grid function.
fn entry_field(g: &HermitianField, a: usize, b: usize) -> ComplexField {
    let data = (0..g.grid().len()).map(|p| g.at(p)[(a, b)]).collect();
    ComplexField::new(Arc::clone(g.grid()), data).expect("length matches grid")
}

fn inverse_at(g: &HermitianField, p: usize) -> Result<CMat> {
    hermitian_inverse(&g.at(p)).ok_or_else(|| Error::NotPositiveDefinite {
        point: p,
        min_eigenvalue: g.at(p).hermitian_eigenvalues()[0],
    })
}

/// Tolerance used for the curvature cross-check on `grid` for metric `g`.
pub fn curvature_tolerance(g: &HermitianField) -> f64 {
    let grid = g.grid();
    let mean = g.mean();
    let variation = (0..grid.len())
        .map(|p| (g.at(p) - mean).max_abs())
        .fold(0.0, f64::max);
    match grid.mode() {
        DiffMode::Spectral => 1e-8,
        DiffMode::Central2 => {
            let h = grid.spacing();
            1e-8 + (2.0 * std::f64::consts::PI).powi(4) * h * h * variation
        }
    }
}

/// Connection data with the default curvature tolerance.
pub fn chern_data(g: &HermitianField) -> Result<ConnectionData> {
    chern_data_with_tolerance(g, curvature_tolerance(g))
}

/// Computes Γ, T and R; errors if the two curvature expressions differ by more than `tolerance`.
pub fn chern_data_with_tolerance(g: &HermitianField, tolerance: f64) -> Result<ConnectionData> {
    g.check_positive()?;
    let grid = Arc::clone(g.grid());
    let n = grid.n();
    let len = grid.len();
    let zero = C64::new(0.0, 0.0);
    if g.is_uniform() {
        return Ok(ConnectionData {
            grid,
            gamma: vec![zero; len * n * n * n],
            torsion: vec![zero; len * n * n * n],
            curvature: vec![zero; len * n * n * n * n],
            curvature_metric: vec![zero; len * n * n * n * n],
            discrepancy: 0.0,
        });
    }

    let inverse: Vec<CMat> = (0..len).map(|p| inverse_at(g, p)).collect::<Result<_>>()?;
    let entries: Vec<Vec<ComplexField>> = (0..n)
        .map(|a| (0..n).map(|b| entry_field(g, a, b)).collect())
        .collect();
    // dg[l][a][b] = ∂_l g_{a b̄}, dbar_g[l][a][b] = ∂̄_l g_{a b̄}
    let mut dg = Vec::with_capacity(n);
    let mut dbar_g = Vec::with_capacity(n);
    for l in 0..n {
        let mut row = Vec::with_capacity(n);
        let mut row_bar = Vec::with_capacity(n);
        for entries_a in &entries {
            let mut r = Vec::with_capacity(n);
            let mut rb = Vec::with_capacity(n);
            for e in entries_a {
                r.push(grid.partial(e, l, Derivative::Holomorphic)?);
                rb.push(grid.partial(e, l, Derivative::Antiholomorphic)?);
            }
            row.push(r);
            row_bar.push(rb);
        }
        dg.push(row);
        dbar_g.push(row_bar);
    }

    let nnn = n * n * n;
    let mut gamma = vec![zero; len * nnn];
    gamma.par_chunks_mut(nnn).enumerate().for_each(|(p, out)| {
        let gi = &inverse[p];
        for i in 0..n {
            for l in 0..n {
                for j in 0..n {
                    let mut s = zero;
                    for m in 0..n {
                        // g^{i m̄} = (G^{-1})_{m i}
                        s += gi[(m, i)] * dg[l][j][m].values()[p];
                    }
                    out[(i * n + l) * n + j] = s;
                }
            }
        }
    });
    let mut torsion = vec![zero; len * nnn];
    torsion.par_chunks_mut(nnn).enumerate().for_each(|(p, out)| {
        let gp = &gamma[p * nnn..(p + 1) * nnn];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[(k * n + i) * n + j] = gp[(k * n + i) * n + j] - gp[(k * n + j) * n + i];
                }
            }
        }
    });

    // ∂̄_j Γ^m_{ik}
    let mut dbar_gamma = vec![vec![zero; len * nnn]; n];
    for (j, target) in dbar_gamma.iter_mut().enumerate() {
        for c in 0..nnn {
            let comp = ComplexField::new(
                Arc::clone(&grid),
                (0..len).map(|p| gamma[p * nnn + c]).collect(),
            )?;
            let d = grid.partial(&comp, j, Derivative::Antiholomorphic)?;
            for (p, v) in d.values().iter().enumerate() {
                target[p * nnn + c] = *v;
            }
        }
    }
    // ∂_i ∂̄_j g_{k l̄}
    let mut ddbar_g = vec![vec![Vec::new(); n]; n];
    for (i, row) in ddbar_g.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut per_kl = Vec::with_capacity(n * n);
            for k in 0..n {
                for l in 0..n {
                    per_kl.push(grid.partial(&dbar_g[j][k][l], i, Derivative::Holomorphic)?);
                }
            }
            *cell = per_kl;
        }
    }

    let n4 = nnn * n;
    let mut curvature = vec![zero; len * n4];
    let mut curvature_metric = vec![zero; len * n4];
    curvature
        .par_chunks_mut(n4)
        .zip(curvature_metric.par_chunks_mut(n4))
        .enumerate()
        .for_each(|(p, (r1, r2))| {
            let gp = g.at(p);
            let gi = &inverse[p];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let mut via_gamma = zero;
                            for m in 0..n {
                                via_gamma -= gp[(m, l)] * dbar_gamma[j][p * nnn + (m * n + i) * n + k];
                            }
                            let mut via_metric = -ddbar_g[i][j][k * n + l].values()[p];
                            for pp in 0..n {
                                for q in 0..n {
                                    via_metric += gi[(q, pp)]
                                        * dg[i][k][q].values()[p]
                                        * dbar_g[j][pp][l].values()[p];
                                }
                            }
                            let at = ((i * n + j) * n + k) * n + l;
                            r1[at] = via_gamma;
                            r2[at] = via_metric;
                        }
                    }
                }
            }
        });
    let discrepancy = curvature
        .iter()
        .zip(&curvature_metric)
        .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).norm()));
    if discrepancy > tolerance {
        return Err(Error::CurvatureMismatch {
            discrepancy,
            tolerance,
        });
    }
    Ok(ConnectionData {
        grid,
        gamma,
        torsion,
        curvature,
        curvature_metric,
        discrepancy,
    })
}

/// `max |∂_k A_{ij̄} − ∂_i A_{kj̄}|`: vanishes iff the (1,1)-form `A` is closed.
///
/// Derivatives are taken spectrally regardless of the grid's backend, since
/// closedness is a property of the continuum form.
pub fn closedness_defect(a: &HermitianField) -> Result<f64> {
    let n = a.n();
    if a.is_uniform() {
        return Ok(0.0);
    }
    let grid = a.grid().with_mode(DiffMode::Spectral);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let cols: Vec<ComplexField> = (0..n)
            .map(|i| ComplexField::new(Arc::clone(&grid), entry_field(a, i, j).into_values()))
            .collect::<Result<_>>()?;
        for i in 0..n {
            for k in i + 1..n {
                let dk = grid.partial(&cols[i], k, Derivative::Holomorphic)?;
                let di = grid.partial(&cols[k], i, Derivative::Holomorphic)?;
                for (x, y) in dk.values().iter().zip(di.values()) {
                    worst = worst.max((x - y).norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Pointwise `tr(g^{-1} X) = Σ g^{ij̄} X_{ij̄}`.
pub fn trace(x: &HermitianField, g: &HermitianField) -> Result<ScalarField> {
    if !x.grid().same_lattice(g.grid()) {
        return Err(Error::GridMismatch);
    }
    let per_point: Vec<Result<f64>> = (0..x.grid().len())
        .into_par_iter()
        .map(|p| Ok((inverse_at(g, p)? * x.at(p)).trace().re))
        .collect();
    let data = per_point.into_iter().collect::<Result<Vec<f64>>>()?;
    ScalarField::new(Arc::clone(x.grid()), data)
}

/// `Δu = Σ g^{ij̄} ∂_i ∂̄_j u`.
pub fn laplacian(u: &ScalarField, g: &HermitianField) -> Result<ScalarField> {
    let grid = u.grid();
    let h = grid.hessian_complex(u)?;
    trace(&h, g)
}

//! Uniform periodic grids on the flat torus ℂⁿ/(ℤ+iℤ)ⁿ and the complex
//! differentiation operators ∂_i, ∂̄_j, ∂_i∂̄_j built on them.
//!
//! Points are indexed in row-major order over the real axes
//! `(x_1, y_1, x_2, y_2, …)` with `z_k = x_k + i y_k` and coordinates in `[0, 1)`.
//! Two backends are available: exact Fourier differentiation and second-order
//! central differences. The central backend acts in physical space with
//! stencils; its Fourier symbols are exposed for preconditioning.

mod fft;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{offdiag_slot, HermitianField, Role};
use fft::CubeFft;

/// Largest number of grid points accepted by [`TorusGrid::new`].
pub const MAX_POINTS: usize = 1 << 25;

/// Differentiation backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    Spectral,
    Central2,
}

impl std::str::FromStr for DiffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(DiffMode::Spectral),
            "central2" => Ok(DiffMode::Central2),
            other => Err(Error::Config(format!("unknown diff mode `{other}`"))),
        }
    }
}

/// Holomorphic (`∂_i`) or antiholomorphic (`∂̄_i`) first derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derivative {
    Holomorphic,
    Antiholomorphic,
}

/// A uniform periodic lattice with `m` points per real axis.
pub struct TorusGrid {
    n: usize,
    m: usize,
    log2m: u32,
    len: usize,
    mode: DiffMode,
    /// First-derivative symbol per Fourier index: `∂_x e_k = i d1[k] e_k`.
    d1: Vec<f64>,
    /// Second-derivative symbol per Fourier index: `∂_x² e_k = d2[k] e_k`.
    d2: Vec<f64>,
    /// Per complex coordinate, indexed by `(k_x, k_y)`: the symbol of `∂∂̄`.
    pair_laplace: Vec<f64>,
    /// Per complex coordinate: `(d1[k_y], d1[k_x])`, twice the symbol of `∂`.
    pair_holo: Vec<C64>,
    fft: CubeFft,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("mode", &self.mode)
            .finish()
    }
}

impl TorusGrid {
    pub fn new(n: usize, m: usize, mode: DiffMode) -> Result<Arc<Self>> {
        if !(2..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if m < 8 || !m.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {m}"
            )));
        }
        let len = m
            .checked_pow(2 * n as u32)
            .filter(|&l| l <= MAX_POINTS)
            .ok_or_else(|| Error::InvalidGrid(format!("m = {m} with n = {n} is too large")))?;

        let (d1, d2) = symbols(m, mode);
        let pairs = (0..m * m).map(|q| (q / m, q % m));
        let pair_laplace = pairs.clone().map(|(kx, ky)| 0.25 * (d2[kx] + d2[ky])).collect();
        let pair_holo = pairs.map(|(kx, ky)| C64::new(d1[ky], d1[kx])).collect();
        Ok(Arc::new(Self {
            n,
            m,
            log2m: m.trailing_zeros(),
            len,
            mode,
            d1,
            d2,
            pair_laplace,
            pair_holo,
            fft: CubeFft::new(m, 2 * n),
        }))
    }

    /// Same lattice, different differentiation backend.
    pub fn with_mode(&self, mode: DiffMode) -> Arc<Self> {
        Self::new(self.n, self.m, mode).expect("dimensions already validated")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mode(&self) -> DiffMode {
        self.mode
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// True when both grids index the same lattice (the backend may differ).
    pub fn same_lattice(&self, other: &TorusGrid) -> bool {
        self.n == other.n && self.m == other.m
    }

    #[inline]
    fn stride_shift(&self, axis: usize) -> u32 {
        self.log2m * (self.real_dim() - 1 - axis) as u32
    }

    /// Index along real axis `axis` of flat point `p`.
    #[inline]
    pub fn axis_index(&self, p: usize, axis: usize) -> usize {
        (p >> self.stride_shift(axis)) & (self.m - 1)
    }

    /// Flat index of the periodic neighbour of `p` one step along `axis`.
    #[inline]
    pub fn neighbor(&self, p: usize, axis: usize, forward: bool) -> usize {
        let shift = self.stride_shift(axis);
        let stride = 1usize << shift;
        let c = (p >> shift) & (self.m - 1);
        match (forward, c) {
            (true, c) if c == self.m - 1 => p - (self.m - 1) * stride,
            (true, _) => p + stride,
            (false, 0) => p + (self.m - 1) * stride,
            (false, _) => p - stride,
        }
    }

    /// Flat index after shifting every real axis by `offsets` (periodic).
    pub fn shifted(&self, p: usize, offsets: &[isize]) -> usize {
        let m = self.m as isize;
        let mut q = 0usize;
        for (axis, &off) in offsets.iter().enumerate().take(self.real_dim()) {
            let c = self.axis_index(p, axis) as isize;
            let c = (c + off).rem_euclid(m) as usize;
            q |= c << self.stride_shift(axis);
        }
        q
    }

    /// Writes the real coordinates of point `p` into `out[..2n]`.
    pub fn point(&self, p: usize, out: &mut [f64]) {
        let h = self.spacing();
        for (axis, x) in out.iter_mut().enumerate().take(self.real_dim()) {
            *x = self.axis_index(p, axis) as f64 * h;
        }
    }

    /// Evaluates `f` at every grid point.
    pub fn sample<F>(self: &Arc<Self>, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let dim = self.real_dim();
        let data = (0..self.len)
            .into_par_iter()
            .map(|p| {
                let mut x = [0.0; 6];
                self.point(p, &mut x);
                f(&x[..dim])
            })
            .collect();
        ScalarField {
            grid: Arc::clone(self),
            data,
        }
    }

    pub fn sample_complex<F>(self: &Arc<Self>, f: F) -> ComplexField
    where
        F: Fn(&[f64]) -> C64 + Sync,
    {
        let dim = self.real_dim();
        let data = (0..self.len)
            .into_par_iter()
            .map(|p| {
                let mut x = [0.0; 6];
                self.point(p, &mut x);
                f(&x[..dim])
            })
            .collect();
        ComplexField {
            grid: Arc::clone(self),
            data,
        }
    }

    /// Signed frequency of Fourier index `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        if k <= self.m / 2 {
            k as f64
        } else {
            k as f64 - self.m as f64
        }
    }

    /// First-derivative symbol `s` with `∂_x e_k = i s e_k` for the active backend.
    pub fn first_symbol(&self, k: usize) -> f64 {
        self.d1[k]
    }

    pub fn second_symbol(&self, k: usize) -> f64 {
        self.d2[k]
    }

    /// Fourier symbol of `∂_a ∂̄_b` at flat wavenumber index `p`.
    #[inline]
    pub fn hessian_symbol(&self, a: usize, b: usize, p: usize) -> C64 {
        let qa = self.pair_index(p, a);
        if a == b {
            return C64::new(self.pair_laplace[qa], 0.0);
        }
        let qb = self.pair_index(p, b);
        -0.25 * self.pair_holo[qa] * self.pair_holo[qb].conj()
    }

    #[inline(always)]
    fn symbol_from_pairs(&self, a: usize, b: usize, q: &[usize; 3]) -> C64 {
        if a == b {
            return C64::new(self.pair_laplace[q[a]], 0.0);
        }
        -0.25 * self.pair_holo[q[a]] * self.pair_holo[q[b]].conj()
    }

    /// Writes `f(p, q)` at every flat index `p`, with `q[a]` the pair index of coordinate `a`.
    fn map_spectrum<F>(&self, out: &mut [C64], f: F)
    where
        F: Fn(usize, &[usize; 3]) -> C64 + Sync,
    {
        let n = self.n;
        let mm = self.m * self.m;
        let bits = 2 * self.log2m;
        out.par_chunks_mut(mm).enumerate().for_each(|(c, chunk)| {
            let mut q = [0usize; 3];
            for (a, qa) in q.iter_mut().enumerate().take(n - 1) {
                *qa = (c >> (bits * (n - 2 - a) as u32)) & (mm - 1);
            }
            let base = c * mm;
            for (i, v) in chunk.iter_mut().enumerate() {
                q[n - 1] = i;
                *v = f(base + i, &q);
            }
        });
    }

    /// Index of `(k_{x_a}, k_{y_a})` in the per-pair tables.
    #[inline(always)]
    fn pair_index(&self, p: usize, a: usize) -> usize {
        (p >> self.stride_shift(2 * a + 1)) & (self.m * self.m - 1)
    }

    /// Fourier symbol of `∂_a` or `∂̄_a`.
    #[inline]
    pub fn first_derivative_symbol(&self, a: usize, kind: Derivative, p: usize) -> C64 {
        let kx = self.axis_index(p, 2 * a);
        let ky = self.axis_index(p, 2 * a + 1);
        match kind {
            Derivative::Holomorphic => 0.5 * C64::new(self.d1[ky], self.d1[kx]),
            Derivative::Antiholomorphic => 0.5 * C64::new(-self.d1[ky], self.d1[kx]),
        }
    }

    /// Unnormalized forward transform over all real axes.
    pub fn fft_forward(&self, data: &mut [C64]) {
        self.fft.process(data, false);
    }

    /// Inverse transform including the `1/len` normalization.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        self.fft.process(data, true);
        let scale = 1.0 / self.len as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.n {
            return Err(Error::AxisOutOfRange { axis, n: self.n });
        }
        Ok(())
    }

    /// `∂_i f` or `∂̄_i f` (0-based complex axis `i`).
    pub fn partial(&self, f: &ComplexField, i: usize, kind: Derivative) -> Result<ComplexField> {
        self.check_axis(i)?;
        if !self.same_lattice(&f.grid) {
            return Err(Error::GridMismatch);
        }
        let data = match self.mode {
            DiffMode::Spectral => {
                let mut hat = f.data.clone();
                self.fft_forward(&mut hat);
                hat.par_iter_mut()
                    .enumerate()
                    .for_each(|(p, v)| *v *= self.first_derivative_symbol(i, kind, p));
                self.fft_inverse(&mut hat);
                hat
            }
            DiffMode::Central2 => {
                let half_inv_h = 0.5 * self.m as f64;
                let sign = match kind {
                    Derivative::Holomorphic => -1.0,
                    Derivative::Antiholomorphic => 1.0,
                };
                (0..self.len)
                    .into_par_iter()
                    .map(|p| {
                        let dx = (f.data[self.neighbor(p, 2 * i, true)]
                            - f.data[self.neighbor(p, 2 * i, false)])
                            * half_inv_h;
                        let dy = (f.data[self.neighbor(p, 2 * i + 1, true)]
                            - f.data[self.neighbor(p, 2 * i + 1, false)])
                            * half_inv_h;
                        0.5 * (dx + C64::new(0.0, sign) * dy)
                    })
                    .collect()
            }
        };
        Ok(ComplexField {
            grid: Arc::clone(&f.grid),
            data,
        })
    }

    /// The complex Hessian `H_{ij̄} = ∂_i ∂̄_j u` of a real field, stored Hermitian.
    pub fn hessian_complex(&self, u: &ScalarField) -> Result<HermitianField> {
        if !self.same_lattice(&u.grid) {
            return Err(Error::GridMismatch);
        }
        let n = self.n;
        let nn = n * n;
        let mut packed = vec![0.0; self.len * nn];
        match self.mode {
            DiffMode::Spectral => self.hessian_spectral(&u.data, &mut packed),
            DiffMode::Central2 => self.hessian_central(&u.data, &mut packed),
        }
        Ok(HermitianField::from_packed(
            Arc::clone(&u.grid),
            Role::Generic,
            packed,
        ))
    }

    fn hessian_spectral(&self, u: &[f64], packed: &mut [f64]) {
        let mut hat: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fft_forward(&mut hat);
        self.hessian_from_spectrum(&hat, packed);
    }

    /// Fills packed Hermitian components from the forward transform of a real field.
    pub(crate) fn hessian_from_spectrum(&self, hat: &[C64], packed: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let scale = 1.0 / self.len as f64;
        let mut buf = vec![C64::new(0.0, 0.0); self.len];
        // diagonal entries are real: pack two per transform
        let mut a = 0;
        while a < n {
            let b = (a + 1 < n).then_some(a + 1);
            let bb = b.unwrap_or(a);
            let second = b.is_some() as u8 as f64;
            self.map_spectrum(&mut buf, |p, q| {
                let sa = self.pair_laplace[q[a]];
                let sb = second * self.pair_laplace[q[bb]];
                hat[p] * C64::new(sa * scale, sb * scale)
            });
            self.fft.process(&mut buf, true);
            packed
                .par_chunks_mut(nn)
                .zip(buf.par_iter())
                .for_each(|(out, v)| {
                    out[a] = v.re;
                    if let Some(b) = b {
                        out[b] = v.im;
                    }
                });
            a += 2;
        }
        for a in 0..n {
            for b in a + 1..n {
                self.map_spectrum(&mut buf, |p, q| hat[p] * self.symbol_from_pairs(a, b, q) * scale);
                self.fft.process(&mut buf, true);
                let slot = offdiag_slot(n, a, b);
                packed
                    .par_chunks_mut(nn)
                    .zip(buf.par_iter())
                    .for_each(|(out, v)| {
                        out[slot] = v.re;
                        out[slot + 1] = v.im;
                    });
            }
        }
    }

    /// Adds `tr(C · ∂∂̄f)` to `out`, where `hat` is the unnormalized spectrum
    /// of `f` and `coeff` holds `C` packed per point; `buf` is scratch.
    pub(crate) fn contract_hessian_spectrum(&self, hat: &[C64], coeff: &[f64], buf: &mut [C64], out: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let scale = 1.0 / self.len as f64;
        let mut a = 0;
        while a < n {
            let b = (a + 1 < n).then_some(a + 1);
            let bb = b.unwrap_or(a);
            let second = b.is_some() as u8 as f64;
            self.map_spectrum(buf, |p, q| {
                let sa = self.pair_laplace[q[a]];
                let sb = second * self.pair_laplace[q[bb]];
                hat[p] * C64::new(sa * scale, sb * scale)
            });
            self.fft.process(buf, true);
            out.par_iter_mut()
                .zip(coeff.par_chunks(nn))
                .zip(buf.par_iter())
                .for_each(|((o, c), v)| {
                    *o += c[a] * v.re + b.map_or(0.0, |b| c[b] * v.im);
                });
            a += 2;
        }
        for a in 0..n {
            for b in a + 1..n {
                self.map_spectrum(buf, |p, q| hat[p] * self.symbol_from_pairs(a, b, q) * scale);
                self.fft.process(buf, true);
                let slot = offdiag_slot(n, a, b);
                out.par_iter_mut()
                    .zip(coeff.par_chunks(nn))
                    .zip(buf.par_iter())
                    .for_each(|((o, c), v)| {
                        *o += 2.0 * (c[slot] * v.re + c[slot + 1] * v.im);
                    });
            }
        }
    }

    fn hessian_central(&self, u: &[f64], packed: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let m2 = (self.m * self.m) as f64;
        packed.par_chunks_mut(nn).enumerate().for_each(|(p, out)| {
            let center = u[p];
            let second = |axis: usize| {
                (u[self.neighbor(p, axis, true)] - 2.0 * center + u[self.neighbor(p, axis, false)])
                    * m2
            };
            let mixed = |r: usize, s: usize| {
                let rp = self.neighbor(p, r, true);
                let rm = self.neighbor(p, r, false);
                (u[self.neighbor(rp, s, true)] - u[self.neighbor(rp, s, false)]
                    - u[self.neighbor(rm, s, true)]
                    + u[self.neighbor(rm, s, false)])
                    * 0.25
                    * m2
            };
            for a in 0..n {
                out[a] = 0.25 * (second(2 * a) + second(2 * a + 1));
            }
            for a in 0..n {
                for b in a + 1..n {
                    let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
                    let slot = offdiag_slot(n, a, b);
                    out[slot] = 0.25 * (mixed(xa, xb) + mixed(ya, yb));
                    out[slot + 1] = 0.25 * (mixed(xa, yb) - mixed(ya, xb));
                }
            }
        });
    }

    /// Grid average; equals the trapezoidal rule on the periodic cell.
    pub fn mean(&self, f: &ScalarField) -> Result<f64> {
        f.mean()
    }
}

fn symbols(m: usize, mode: DiffMode) -> (Vec<f64>, Vec<f64>) {
    let mf = m as f64;
    let freq = |k: usize| {
        if k <= m / 2 {
            k as f64
        } else {
            k as f64 - mf
        }
    };
    match mode {
        DiffMode::Spectral => {
            let d1 = (0..m)
                .map(|k| if k == m / 2 { 0.0 } else { 2.0 * PI * freq(k) })
                .collect();
            let d2 = (0..m).map(|k| -(2.0 * PI * freq(k)).powi(2)).collect();
            (d1, d2)
        }
        DiffMode::Central2 => {
            let d1 = (0..m)
                .map(|k| {
                    if k == m / 2 || k == 0 {
                        0.0
                    } else {
                        mf * (2.0 * PI * k as f64 / mf).sin()
                    }
                })
                .collect();
            let d2 = (0..m)
                .map(|k| -4.0 * mf * mf * (PI * k as f64 / mf).sin().powi(2))
                .collect();
            (d1, d2)
        }
    }
}

/// A real-valued grid function.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<TorusGrid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<TorusGrid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, data })
    }

    pub fn constant(grid: &Arc<TorusGrid>, value: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            data: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: &Arc<TorusGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same values re-attached to another backend of the same lattice.
    pub fn on_grid(&self, grid: &Arc<TorusGrid>) -> Result<Self> {
        if !grid.same_lattice(&self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(grid),
            data: self.data.clone(),
        })
    }

    /// Average over the grid, summed in index order.
    pub fn mean(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::EmptyField);
        }
        Ok(self.data.iter().sum::<f64>() / self.data.len() as f64)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Index of the smallest entry (first one on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (p, &v) in self.data.iter().enumerate() {
            if v < self.data[best] {
                best = p;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Mean-zero representative.
    pub fn mean_zero(&self) -> Self {
        let mean = self.data.iter().sum::<f64>() / self.data.len().max(1) as f64;
        self.shift(-mean)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: Arc::clone(&self.grid),
            data: self.data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    /// Raw little-endian bytes, used for content hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// A complex-valued grid function (derivatives of real fields, metric entries).
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<TorusGrid>,
    data: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: Arc<TorusGrid>, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<C64> {
        self.data
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    pub fn real_part(&self) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self.data.iter().map(|v| v.re).collect(),
        }
    }

    pub fn mean(&self) -> Result<C64> {
        if self.data.is_empty() {
            return Err(Error::EmptyField);
        }
        Ok(self.data.iter().sum::<C64>() / self.data.len() as f64)
    }
}

impl From<&ScalarField> for ComplexField {
    fn from(f: &ScalarField) -> Self {
        f.to_complex()
    }
}

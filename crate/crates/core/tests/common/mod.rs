#![allow(dead_code)]

use std::sync::Arc;

use cma_core::mongeampere::ProblemData;
use cma_core::{CMat, DiffMode, HermitianField, Role, ScalarField, TorusGrid};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    let mut m = CMat::zeros(n);
    for i in 0..n {
        m[(i, i)] = C64::new(rng.gen_range(-scale..scale), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// `A A† + floor I` for a random complex `A`.
pub fn random_positive(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> CMat {
    let mut a = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    a * a.adjoint() + CMat::identity(n).scale(floor)
}

pub fn grid(n: usize, m: usize) -> Arc<TorusGrid> {
    TorusGrid::new(n, m, DiffMode::Spectral).unwrap()
}

/// `g = χ = I` with constant `ψ`.
pub fn flat_data(grid: &Arc<TorusGrid>, psi: f64, alpha: usize) -> ProblemData {
    ProblemData::new(
        HermitianField::identity(grid, Role::Metric),
        HermitianField::identity(grid, Role::Chi),
        ScalarField::constant(grid, psi),
        alpha,
    )
    .unwrap()
}

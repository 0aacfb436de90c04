mod common;

use cma_core::presets::{metric, MetricPreset};
use cma_core::tensor::{margin_field, pencil_eigenvalues, rel_eigen};
use cma_core::{CMat, HermitianField, Role};
use common::random_positive;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pencil_spectrum_is_congruence_invariant(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_positive(&mut rng, n, 0.1);
        let g = random_positive(&mut rng, n, 0.3);
        // a well-conditioned invertible P
        let p = random_positive(&mut rng, n, 1.0) + CMat::from_rows(n, &vec![C64::new(0.0, 0.2); n * n]);
        let before = pencil_eigenvalues(&x, &g).unwrap();
        let after = pencil_eigenvalues(&(p * x * p.adjoint()), &(p * g * p.adjoint())).unwrap();
        for i in 0..n {
            prop_assert!((before[i] - after[i]).abs() <= 1e-9 * before[i].abs().max(1.0));
        }
    }

    #[test]
    fn pencil_of_metric_is_identity(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_positive(&mut rng, n, 0.3);
        let l = pencil_eigenvalues(&g, &g).unwrap();
        for v in &l[..n] {
            prop_assert!((v - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn field_spectrum_matches_pointwise() {
    let grid = cma_core::TorusGrid::new(2, 8, cma_core::DiffMode::Spectral).unwrap();
    let g = metric(&grid, MetricPreset::HermitianPerturbed).unwrap();
    let x = HermitianField::from_fn(&grid, Role::Chi, |x| {
        let mut m = CMat::identity(2);
        m[(0, 0)] = C64::new(1.5 + 0.5 * (std::f64::consts::TAU * x[0]).cos(), 0.0);
        m[(0, 1)] = C64::new(0.1, 0.2);
        m[(1, 0)] = C64::new(0.1, -0.2);
        m
    });
    let spec = rel_eigen(&x, &g).unwrap();
    let margin = margin_field(&x, &g).unwrap();
    for p in 0..grid.len() {
        let l = pencil_eigenvalues(&x.at(p), &g.at(p)).unwrap();
        assert!((spec.at(p)[0] - l[0]).abs() < 1e-12);
        assert!((spec.at(p)[1] - l[1]).abs() < 1e-12);
        assert!((margin.values()[p] - l[0]).abs() < 1e-12);
    }
}

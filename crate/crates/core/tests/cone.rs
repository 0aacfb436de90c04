mod common;

use std::f64::consts::TAU;

use cma_core::cone::{cone_check, kahler_constant, quadrature_identity};
use cma_core::mongeampere::manufacture;
use cma_core::oracle::wedge_cone_eigenvalue;
use cma_core::presets::{chi, metric, ChiSpec, MetricPreset};
use cma_core::{HermitianField, Role, ScalarField};
use common::{grid, random_positive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn margin_decreases_with_psi() {
    let grid = grid(2, 8);
    let g = metric(&grid, MetricPreset::Conformal).unwrap();
    let x = chi(&grid, &ChiSpec::KahlerPerturbed { amplitude: 0.01 }).unwrap();
    for alpha in 1..=2 {
        let mut last = f64::INFINITY;
        let mut held = true;
        for psi in [0.2, 0.5, 0.9, 1.3, 2.0, 4.0] {
            let r = cone_check(&x, &ScalarField::constant(&grid, psi), alpha, &g).unwrap();
            assert!(r.min_margin <= last);
            // once it fails it keeps failing
            assert!(held || !r.holds);
            held = r.holds;
            last = r.min_margin;
            assert!(r.wedge_agrees);
        }
    }
}

#[test]
fn pointwise_and_wedge_verdicts_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut disagreements = 0;
    for n in 2..=3 {
        for alpha in 1..=n {
            for _ in 0..60 {
                let x = random_positive(&mut rng, n, 0.3);
                let g = random_positive(&mut rng, n, 0.5);
                let lambda = &cma_core::tensor::pencil_eigenvalues(&x, &g).unwrap()[..n];
                let c = cma_core::sympoly::binomial(n, alpha) as f64;
                // ψ spread around the threshold C/max_k S_{α;k}
                let star: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
                let (worst, _) = cma_core::sympoly::max_restricted(alpha, &star);
                let threshold = if worst > 0.0 { c / worst } else { 1.0 };
                let psi = threshold * rng.gen_range(0.5..1.5);
                let pointwise = cma_core::cone::cone_margin_at(lambda, psi, alpha).0 > 0.0;
                let wedge = wedge_cone_eigenvalue(&x, &g, psi, alpha).unwrap() > 0.0;
                if pointwise != wedge {
                    disagreements += 1;
                }
            }
        }
    }
    assert_eq!(disagreements, 0);
}

#[test]
fn kahler_constant_ignores_potentials() {
    for n in 2..=3 {
        let grid = grid(n, 8);
        let g = metric(&grid, MetricPreset::KahlerPerturbed).unwrap();
        let x = chi(&grid, &ChiSpec::KahlerPerturbed { amplitude: 0.01 }).unwrap();
        let v = grid.sample(|p| 0.01 * (TAU * p[1]).cos() + 0.005 * (TAU * (p[0] - p[2])).sin());
        let shifted = x.add(&grid.hessian_complex(&v).unwrap()).unwrap();
        for alpha in 1..=n {
            let c0 = kahler_constant(&x, &g, alpha).unwrap();
            let c1 = kahler_constant(&shifted, &g, alpha).unwrap();
            assert!((c0 - c1).abs() <= 1e-9 * c0.abs(), "n={n} alpha={alpha}: {c0} vs {c1}");
        }
    }
}

#[test]
fn quadrature_identity_holds_at_a_solution() {
    let grid = grid(2, 8);
    let g = HermitianField::identity(&grid, Role::Metric);
    let x = chi(&grid, &ChiSpec::KahlerPerturbed { amplitude: 0.01 }).unwrap();
    let u = grid.sample(|p| 0.03 * (TAU * p[0]).cos());
    for alpha in 1..=2 {
        let data = manufacture(&u, &g, &x, alpha).unwrap();
        let chi_u = data.chi_u(&u).unwrap();
        let (lhs, rhs) = quadrature_identity(&chi_u, &g, &data.psi, 0.0, alpha).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        let (_, shifted) = quadrature_identity(&chi_u, &g, &data.psi, 0.1, alpha).unwrap();
        assert!((shifted / rhs - 0.1f64.exp()).abs() < 1e-12);
    }
}

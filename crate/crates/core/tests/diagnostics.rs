mod common;

use std::f64::consts::{PI, TAU};

use cma_core::diagnostics::{
    barrier_probe, c2_monitor, estimate_report, holder_lipschitz_bound, holder_oscillation, w_field, EstimateOptions,
};
use cma_core::presets::{far_state, random_u_star};
use cma_core::{CMat, HermitianField, Role, ScalarField};
use common::{flat_data, grid};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

#[test]
fn w_is_affine_in_u() {
    let grid = grid(2, 8);
    let data = flat_data(&grid, 1.0, 1);
    let u = grid.sample(|x| 0.05 * (TAU * x[0]).cos());
    let v = grid.sample(|x| 0.02 * (TAU * (x[1] + x[3])).sin());
    let w = |f: &ScalarField| w_field(f, &data).unwrap();
    let zero = ScalarField::zeros(&grid);
    let sum = u.axpy(1.0, &v).unwrap();
    let defect = w(&sum).sub(&w(&u)).unwrap().sub(&w(&v)).unwrap().axpy(1.0, &w(&zero)).unwrap();
    assert!(defect.sup_abs() < 1e-12);
}

#[test]
fn c2_monitor_of_a_cosine() {
    // u = 0.05 cos 2πx1 with g = χ = I gives w = 2 − 0.05π² cos 2πx1
    let grid = grid(2, 16);
    let data = flat_data(&grid, 1.0, 1);
    let u = grid.sample(|x| 0.05 * (TAU * x[0]).cos());
    let a = 3.0;
    let mon = c2_monitor(&u, &data, a).unwrap();
    let mut x = [0.0; 4];
    let (mut w_max, mut c) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in 0..grid.len() {
        grid.point(p, &mut x);
        let cos = (TAU * x[0]).cos();
        let w = 2.0 - 0.05 * PI * PI * cos;
        w_max = w_max.max(w);
        c = c.max(w * (-a * (0.05 * cos + 0.05)).exp());
    }
    assert!((mon.w_max - w_max).abs() < 1e-12);
    assert!((mon.fitted_c - c).abs() < 1e-12);
}

#[test]
fn estimates_are_pure() {
    let grid = grid(2, 8);
    let data = flat_data(&grid, 1.0, 1);
    let u = random_u_star(&grid, 5, 0.05);
    let opts = EstimateOptions {
        a: None,
        radii: vec![0.125, 0.25],
        centers: vec![vec![0.0; 4], vec![0.5; 4]],
    };
    let ulbar = ScalarField::zeros(&grid);
    let a = serde_json::to_string(&estimate_report(&u, &ulbar, &data, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&estimate_report(&u, &ulbar, &data, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(u.values(), random_u_star(&grid, 5, 0.05).values());
}

#[test]
fn constant_hessian_has_no_oscillation() {
    let grid = grid(2, 8);
    let mut m = CMat::identity(2).scale(0.7);
    m[(0, 1)] = C64::new(0.1, 0.2);
    m[(1, 0)] = C64::new(0.1, -0.2);
    let hess = HermitianField::uniform(&grid, Role::Generic, m).unwrap();
    for row in holder_oscillation(&hess, &[0.125, 0.3, 0.9], &[vec![0.0; 4], vec![0.3; 4]]).unwrap() {
        assert_eq!(row.phi, 0.0);
    }
}

#[test]
fn oscillation_is_bounded_by_lipschitz_constant() {
    let grid = grid(2, 16);
    let u = random_u_star(&grid, 9, 0.05);
    let hess = grid.hessian_complex(&u).unwrap();
    let lip = holder_lipschitz_bound(&hess).unwrap();
    let h = grid.spacing();
    let radii: Vec<f64> = (1..=4).map(|k| k as f64 * h).collect();
    let centers = vec![vec![0.0; 4], vec![0.25, 0.5, 0.75, 0.125], vec![0.5; 4]];
    for row in holder_oscillation(&hess, &radii, &centers).unwrap() {
        assert!(row.phi <= 1.1 * lip * row.radius, "R={} phi={} lip={lip}", row.radius, row.phi);
    }
}

#[test]
fn far_state_has_positive_barrier_constant() {
    for (n, m) in [(2, 16), (3, 8)] {
        let grid = grid(n, m);
        let data = flat_data(&grid, 1.0, 1);
        let fs = far_state(&grid, 10.0, 0.08);
        let probe = barrier_probe(&fs.u, &fs.ulbar, &data).unwrap();
        assert!(!probe.vacuous);
        assert!(probe.empirical_theta > 0.0, "n={n}: {probe:?}");
        assert!(probe.empirical_n <= probe.sup_w);
        // the subsolution enters only through its Hessian
        let shifted = barrier_probe(&fs.u, &fs.ulbar.shift(2.5), &data).unwrap();
        assert!((shifted.empirical_theta - probe.empirical_theta).abs() < 1e-12);
        assert!((shifted.empirical_n - probe.empirical_n).abs() < 1e-12);
    }
}

#[test]
fn barrier_probe_refuses_without_cone() {
    let grid = grid(2, 8);
    let data = flat_data(&grid, 5.0, 1);
    let u = ScalarField::zeros(&grid);
    assert!(matches!(
        barrier_probe(&u, &u, &data),
        Err(cma_core::Error::Hypothesis(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oscillation_is_monotone_in_radius(seed in any::<u64>(), cx in 0.0f64..1.0, cy in 0.0f64..1.0) {
        let grid = grid(2, 8);
        let u = random_u_star(&grid, seed, 0.05);
        let hess = grid.hessian_complex(&u).unwrap();
        let radii = [0.125, 0.2, 0.25, 0.4, 0.6, 1.2];
        let rows = holder_oscillation(&hess, &radii, &[vec![cx, cy, 0.5, 0.0]]).unwrap();
        for pair in rows.windows(2) {
            prop_assert!(pair[1].phi >= pair[0].phi);
        }
    }
}

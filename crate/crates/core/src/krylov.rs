//! Restart-free BiCGSTAB with deterministic (sequential) inner products.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the initial guess in `x`.
///
/// `apply(v, out)` must write `A v` into `out`. Converged when
/// `‖b − A x‖ ≤ tol ‖b‖`.
pub fn bicgstab<A>(mut apply: A, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<KrylovStats>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let len = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; len];
    if x.iter().any(|&v| v != 0.0) {
        apply(x, &mut r)?;
    }
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = norm(&r) / b_norm;
    if rel <= tol {
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let r_hat = r.clone();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut s = vec![0.0; len];
    let mut t = vec![0.0; len];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolver {
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..len {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v)?;
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(Error::LinearSolver {
                iterations: it,
                relative_residual: rel,
            });
        }
        alpha = rho / denom;
        for i in 0..len {
            s[i] = r[i] - alpha * v[i];
        }
        let s_rel = norm(&s) / b_norm;
        if s_rel <= tol {
            for i in 0..len {
                x[i] += alpha * p[i];
            }
            return Ok(KrylovStats {
                iterations: it,
                relative_residual: s_rel,
            });
        }
        apply(&s, &mut t)?;
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..len {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / b_norm;
        if rel <= tol {
            return Ok(KrylovStats {
                iterations: it,
                relative_residual: rel,
            });
        }
    }
    Err(Error::LinearSolver {
        iterations: max_iter,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let n = 50;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * left - 0.5 * right;
            }
            Ok(())
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = bicgstab(apply, &b, &mut x, 1e-12, 200).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        let mut check = vec![0.0; n];
        apply(&x, &mut check).unwrap();
        let err = check.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 4];
        let stats = bicgstab(|v, out: &mut [f64]| {
            out.copy_from_slice(v);
            Ok(())
        }, &[0.0; 4], &mut x, 1e-8, 10)
        .unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}

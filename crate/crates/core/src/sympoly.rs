//! Elementary symmetric polynomials of eigenvalues and the derivative of
//! `X ↦ S_α(X^{-1})` relative to a metric.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::tensor::CMat;

/// Binomial coefficient `C(n, k)`, exact.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// All of `S_0, …, S_len` from the expansion of `Π (1 + λ_i x)`.
pub fn elementary_all(lambda: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; lambda.len() + 1];
    e[0] = 1.0;
    for (i, &l) in lambda.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += l * e[k - 1];
        }
    }
    e
}

/// `S_0, …, S_3` of at most three values, without allocating.
#[inline]
pub fn elementary_small(lambda: &[f64]) -> [f64; 4] {
    debug_assert!(lambda.len() <= 3);
    let mut e = [1.0, 0.0, 0.0, 0.0];
    for (i, &l) in lambda.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += l * e[k - 1];
        }
    }
    e
}

/// `S_k(λ)`; zero when `k` exceeds the length.
pub fn elementary(k: usize, lambda: &[f64]) -> Result<f64> {
    if k > lambda.len() {
        return Err(Error::OrderOutOfRange {
            k,
            n: lambda.len(),
        });
    }
    Ok(elementary_all(lambda)[k])
}

/// `S_k` of `λ` with the entries at `drop` set to zero.
pub fn restricted(k: usize, lambda: &[f64], drop: &[usize]) -> Result<f64> {
    for (i, &d) in drop.iter().enumerate() {
        if d >= lambda.len() {
            return Err(Error::InvalidIndexSet(format!(
                "index {d} out of range for length {}",
                lambda.len()
            )));
        }
        if drop[..i].contains(&d) {
            return Err(Error::InvalidIndexSet(format!("duplicate index {d}")));
        }
    }
    let kept: Vec<f64> = lambda
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, &l)| l)
        .collect();
    if k > lambda.len() {
        return Err(Error::OrderOutOfRange {
            k,
            n: lambda.len(),
        });
    }
    Ok(kept_elementary(k, &kept))
}

fn kept_elementary(k: usize, kept: &[f64]) -> f64 {
    if k > kept.len() {
        0.0
    } else {
        elementary_all(kept)[k]
    }
}

/// `max_k S_{α;k}(λ)` together with the maximizing index (first on ties).
pub fn max_restricted(alpha: usize, lambda: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    let mut kept = Vec::with_capacity(lambda.len());
    for k in 0..lambda.len() {
        kept.clear();
        kept.extend(lambda.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &l)| l));
        let v = kept_elementary(alpha, &kept);
        if v > best.0 {
            best = (v, k);
        }
    }
    best
}

/// Elementary symmetric functions `e_0..e_n` of the eigenvalues of `m`,
/// from sums of principal minors.
pub fn char_coeffs(m: &CMat) -> [f64; 4] {
    let n = m.dim();
    let mut e = [1.0, 0.0, 0.0, 0.0];
    e[1] = m.trace().re;
    match n {
        2 => e[2] = m.det().re,
        3 => {
            let minor = |i: usize, j: usize| m[(i, i)] * m[(j, j)] - m[(i, j)] * m[(j, i)];
            e[2] = (minor(0, 1) + minor(0, 2) + minor(1, 2)).re;
            e[3] = m.det().re;
        }
        _ => {}
    }
    e
}

/// Inverse of a Hermitian positive definite matrix (via Cholesky).
pub fn hermitian_inverse(x: &CMat) -> Option<CMat> {
    if x.dim() == 2 {
        let (a, d, b) = (x[(0, 0)].re, x[(1, 1)].re, x[(0, 1)]);
        let det = a * d - b.norm_sqr();
        if !(a > 0.0 && det > 0.0) {
            return None;
        }
        let mut inv = CMat::zeros(2);
        inv[(0, 0)] = C64::new(d / det, 0.0);
        inv[(1, 1)] = C64::new(a / det, 0.0);
        inv[(0, 1)] = -b / det;
        inv[(1, 0)] = -b.conj() / det;
        return Some(inv);
    }
    let l = x.cholesky()?;
    let li = l.lower_inverse();
    Some(li.adjoint() * li)
}

fn check_order(alpha: usize, n: usize) -> Result<()> {
    if alpha == 0 || alpha > n {
        return Err(Error::OrderOutOfRange { k: alpha, n });
    }
    Ok(())
}

/// `S_α` of the eigenvalues of `X^{-1}` relative to `g`, i.e. `e_α(X^{-1} g)`.
pub fn s_alpha_inv(x: &CMat, g: &CMat, alpha: usize) -> Result<f64> {
    check_order(alpha, x.dim())?;
    let xi = hermitian_inverse(x).ok_or_else(|| Error::NotPositiveDefinite {
        point: 0,
        min_eigenvalue: x.hermitian_eigenvalues()[0],
    })?;
    Ok(char_coeffs(&(xi * *g))[alpha])
}

/// Value and gradient of `S_α(X^{-1})` relative to `g`.
///
/// The gradient `D` is Hermitian and satisfies
/// `d/ds S_α((X + sH)^{-1}) = tr(D H) = Σ_{ij} D_{ji} H_{ij}` for Hermitian `H`.
pub fn s_alpha_inv_with_gradient(x: &CMat, g: &CMat, alpha: usize) -> Result<(f64, CMat)> {
    let n = x.dim();
    check_order(alpha, n)?;
    let xi = hermitian_inverse(x).ok_or_else(|| Error::NotPositiveDefinite {
        point: 0,
        min_eigenvalue: x.hermitian_eigenvalues()[0],
    })?;
    if n == 2 {
        return Ok(gradient_2(&xi, g, alpha));
    }
    let m = xi * *g;
    let e = char_coeffs(&m);
    // Q = Σ_j (−1)^j e_{α−1−j} M^j, so that d e_α(M) = tr(Q dM)
    let mut q = CMat::zeros(n);
    let mut power = CMat::identity(n);
    for j in 0..alpha {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        q = q + power.scale(sign * e[alpha - 1 - j]);
        power = power * m;
    }
    // dM = −X^{-1} H M, so d e_α = −tr(M Q X^{-1} H)
    let d = (m * q * xi).scale(-1.0).hermitize();
    Ok((e[alpha], d))
}

/// Closed forms for `n = 2`: `S_1 = tr(Y g)`, `D = −Y g Y` and
/// `S_2 = det(Y g)`, `D = −S_2 Y`, with `Y = X^{-1}`.
fn gradient_2(y: &CMat, g: &CMat, alpha: usize) -> (f64, CMat) {
    let (y00, y11, y01) = (y[(0, 0)].re, y[(1, 1)].re, y[(0, 1)]);
    let (g00, g11, g01) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)]);
    let mut d = CMat::zeros(2);
    if alpha == 2 {
        let s = (g00 * g11 - g01.norm_sqr()) * (y00 * y11 - y01.norm_sqr());
        d[(0, 0)] = C64::new(-s * y00, 0.0);
        d[(1, 1)] = C64::new(-s * y11, 0.0);
        d[(0, 1)] = -s * y01;
        d[(1, 0)] = -s * y01.conj();
        return (s, d);
    }
    let s = y00 * g00 + y11 * g11 + 2.0 * (y01 * g01.conj()).re;
    // rows of Y g
    let a00 = y00 * g00 + y01 * g01.conj();
    let a01 = y00 * g01 + y01 * g11;
    let a10 = y01.conj() * g00 + y11 * g01.conj();
    let a11 = y01.conj() * g01 + y11 * g11;
    let d00 = (a00 * y00 + a01 * y01.conj()).re;
    let d11 = (a10 * y01 + a11 * y11).re;
    let d01 = a00 * y01 + a01 * y11;
    d[(0, 0)] = C64::new(-d00, 0.0);
    d[(1, 1)] = C64::new(-d11, 0.0);
    d[(0, 1)] = -d01;
    d[(1, 0)] = -d01.conj();
    (s, d)
}

pub fn grad_s_alpha_inv(x: &CMat, g: &CMat, alpha: usize) -> Result<CMat> {
    Ok(s_alpha_inv_with_gradient(x, g, alpha)?.1)
}

/// `tr(D H)` for Hermitian `D`, `H`.
pub fn pairing(d: &CMat, h: &CMat) -> f64 {
    let n = d.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += d[(j, i)] * h[(i, j)];
        }
    }
    acc.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 2), 3);
        assert_eq!(binomial(2, 1), 2);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(10, 5), 252);
    }

    #[test]
    fn small_values() {
        assert_eq!(elementary(2, &[1.0, 1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(elementary(1, &[2.0, 0.5]).unwrap(), 2.5);
        assert_eq!(elementary(0, &[2.0, 0.5]).unwrap(), 1.0);
        assert!(elementary(3, &[2.0, 0.5]).is_err());
        assert_eq!(restricted(1, &[1.0, 2.0, 3.0], &[0]).unwrap(), 5.0);
        assert!(restricted(1, &[1.0, 2.0], &[0, 0]).is_err());
        assert!(restricted(1, &[1.0, 2.0], &[2]).is_err());
    }

    #[test]
    fn alpha_one_gradient_is_minus_inverse_squared() {
        let x = CMat::from_rows(
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.3, 0.4),
                C64::new(0.3, -0.4),
                C64::new(1.0, 0.0),
            ],
        );
        let d = grad_s_alpha_inv(&x, &CMat::identity(2), 1).unwrap();
        let xi = x.inverse().unwrap();
        assert!((d + xi * xi).max_abs() < 1e-14);
    }

    fn generic_gradient(x: &CMat, g: &CMat, alpha: usize) -> (f64, CMat) {
        let xi = x.inverse().unwrap();
        let m = xi * *g;
        let e = char_coeffs(&m);
        let mut q = CMat::zeros(x.dim());
        let mut power = CMat::identity(x.dim());
        for j in 0..alpha {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            q = q + power.scale(sign * e[alpha - 1 - j]);
            power = power * m;
        }
        (e[alpha], (m * q * xi).scale(-1.0).hermitize())
    }

    #[test]
    fn two_by_two_closed_forms_match_power_series() {
        let x = CMat::from_rows(
            2,
            &[C64::new(2.0, 0.0), C64::new(0.3, 0.4), C64::new(0.3, -0.4), C64::new(1.0, 0.0)],
        );
        let g = CMat::from_rows(
            2,
            &[C64::new(1.5, 0.0), C64::new(0.1, -0.2), C64::new(0.1, 0.2), C64::new(0.8, 0.0)],
        );
        for alpha in 1..=2 {
            let (s, d) = s_alpha_inv_with_gradient(&x, &g, alpha).unwrap();
            let (s_ref, d_ref) = generic_gradient(&x, &g, alpha);
            assert!((s - s_ref).abs() < 1e-14);
            assert!((d - d_ref).max_abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn decomposition_identity(l in proptest::collection::vec(-3.0f64..3.0, 3), i in 0usize..3) {
            for k in 1..=3 {
                let full = elementary(k, &l).unwrap();
                let split = restricted(k, &l, &[i]).unwrap() + l[i] * restricted(k - 1, &l, &[i]).unwrap();
                prop_assert!((full - split).abs() <= 1e-13 * (1.0 + full.abs()));
            }
        }

        #[test]
        fn newton_maclaurin(l in proptest::collection::vec(0.01f64..10.0, 3)) {
            let s1 = elementary(1, &l).unwrap();
            let s2 = elementary(2, &l).unwrap();
            prop_assert!(s1 / 3.0 + 1e-12 >= (s2 / 3.0).sqrt());
        }
    }
}

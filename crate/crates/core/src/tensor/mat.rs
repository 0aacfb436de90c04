//! Small dense complex matrices (n ≤ 3) with Hermitian eigen- and Cholesky solvers.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// An `n × n` complex matrix with `n ≤ 3`, stored row-major in a fixed array.
#[derive(Clone, Copy, PartialEq)]
pub struct CMat {
    n: usize,
    a: [C64; 9],
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.n {
            let row: Vec<C64> = (0..self.n).map(|j| self[(i, j)]).collect();
            list.entry(&row);
        }
        list.finish()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[3 * i + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[3 * i + j]
    }
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= 3, "CMat supports n <= 3");
        Self { n, a: [ZERO; 9] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(n: usize, rows: &[C64]) -> Self {
        assert_eq!(rows.len(), n * n);
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = rows[n * i + j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        for v in m.a.iter_mut() {
            *v = v.conj();
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self[(j, i)];
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for v in m.a.iter_mut() {
            *v *= s;
        }
        m
    }

    pub fn scale_c(&self, s: C64) -> Self {
        let mut m = *self;
        for v in m.a.iter_mut() {
            *v *= s;
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    /// `max |A − A†|`.
    pub fn hermitian_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Replaces the matrix by `(A + A†)/2`.
    pub fn hermitize(&self) -> Self {
        (*self + self.adjoint()).scale(0.5)
    }

    pub fn det(&self) -> C64 {
        let a = |i, j| self[(i, j)];
        match self.n {
            0 => ONE,
            1 => a(0, 0),
            2 => a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
            _ => {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
        }
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let mut a = *self;
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        if scale == 0.0 {
            return None;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[(r, col)].norm().total_cmp(&a[(s, col)].norm()))
                .expect("non-empty range");
            if a[(pivot, col)].norm() <= 1e-14 * scale {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.a.swap(3 * pivot + j, 3 * col + j);
                    inv.a.swap(3 * pivot + j, 3 * col + j);
                }
            }
            let d = a[(col, col)].inv();
            for j in 0..n {
                a[(col, j)] *= d;
                inv[(col, j)] *= d;
            }
            for r in 0..n {
                if r != col {
                    let f = a[(r, col)];
                    if f != ZERO {
                        for j in 0..n {
                            let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                            a[(r, j)] -= f * ac;
                            inv[(r, j)] -= f * ic;
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    /// Lower-triangular `L` with positive diagonal and `L L† = A`, for Hermitian `A`.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d.is_nan() || d <= 0.0 {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = C64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Some(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_inverse(&self) -> Self {
        let n = self.n;
        let mut inv = Self::zeros(n);
        for j in 0..n {
            inv[(j, j)] = self[(j, j)].inv();
            for i in j + 1..n {
                let mut s = ZERO;
                for k in j..i {
                    s += self[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / self[(i, i)];
            }
        }
        inv
    }

    /// Eigenvalues (ascending) of a Hermitian matrix.
    pub fn hermitian_eigenvalues(&self) -> [f64; 3] {
        match self.n {
            1 => [self[(0, 0)].re, 0.0, 0.0],
            2 => {
                let a = self[(0, 0)].re;
                let d = self[(1, 1)].re;
                let half = 0.5 * (a - d);
                let r = half.hypot(self[(0, 1)].norm());
                let mid = 0.5 * (a + d);
                [mid - r, mid + r, 0.0]
            }
            _ => self.hermitian_eigen().0,
        }
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
    ///
    /// Returns ascending eigenvalues and a unitary `V` whose columns are the
    /// matching eigenvectors.
    pub fn hermitian_eigen(&self) -> ([f64; 3], Self) {
        let n = self.n;
        let mut a = self.hermitize();
        let mut v = Self::identity(n);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for _sweep in 0..60 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-17 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    let mag = apq.norm();
                    if mag <= 1e-300 {
                        continue;
                    }
                    let phase = apq / mag;
                    let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                    let t = if tau == 0.0 {
                        1.0
                    } else {
                        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let mut j = Self::identity(n);
                    j[(p, p)] = C64::new(c, 0.0);
                    j[(p, q)] = C64::new(s, 0.0);
                    j[(q, p)] = -phase.conj() * s;
                    j[(q, q)] = phase.conj() * c;
                    a = j.adjoint() * a * j;
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    v = v * j;
                }
            }
        }
        let mut order = [0usize, 1, 2];
        order[..n].sort_by(|&i, &k| a[(i, i)].re.total_cmp(&a[(k, k)].re));
        let mut vals = [0.0; 3];
        let mut vecs = Self::zeros(n);
        for (c, &src) in order[..n].iter().enumerate() {
            vals[c] = a[(src, src)].re;
            for r in 0..n {
                vecs[(r, c)] = v[(r, src)];
            }
        }
        (vals, vecs)
    }
}

impl Add for CMat {
    type Output = CMat;

    fn add(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.n, rhs.n);
        let mut m = self;
        for (x, y) in m.a.iter_mut().zip(rhs.a.iter()) {
            *x += y;
        }
        m
    }
}

impl Sub for CMat {
    type Output = CMat;

    fn sub(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.n, rhs.n);
        let mut m = self;
        for (x, y) in m.a.iter_mut().zip(rhs.a.iter()) {
            *x -= y;
        }
        m
    }
}

impl Mul for CMat {
    type Output = CMat;

    #[inline]
    fn mul(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut m = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                for j in 0..n {
                    m[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        m
    }
}

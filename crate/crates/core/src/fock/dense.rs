//! Small dense complex linear algebra: products, LU solves, the
//! scaling-and-squaring Padé(13) matrix exponential, and the symmetric
//! tridiagonal eigensolver used by the Lanczos propagator.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.n + c]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.n + c]
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scaled(&self, s: Complex<T>) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b * s)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|c| (0..self.n).map(|r| self[(r, c)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Solve `self · X = rhs` by LU with partial pivoting. Returns `None` for
    /// a numerically singular matrix.
    pub fn solve(&self, rhs: &Self) -> Option<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let (piv, best) = (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .fold((col, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    b.swap(col * n + j, piv * n + j);
                }
            }
            let inv = Complex::<T>::one() / a[col * n + col];
            for r in col + 1..n {
                let f: Complex<T> = a[r * n + col] * inv;
                if f.is_zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
                for j in 0..n {
                    let v = b[col * n + j];
                    b[r * n + j] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = Complex::<T>::one() / a[col * n + col];
            for j in 0..n {
                b[col * n + j] *= inv;
            }
            for r in 0..col {
                let f = a[r * n + col];
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = b[col * n + j];
                    b[r * n + j] -= f * v;
                }
            }
        }
        Some(Self { n, data: b })
    }

    /// `exp(self)` by scaling and squaring with a degree-13 Padé approximant.
    pub fn expm(&self) -> Self {
        const B: [f64; 14] = [
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ];
        const THETA_13: f64 = 5.371920351148152;
        let n = self.n;
        if n == 0 {
            return Self::zeros(0);
        }
        let norm = self.norm1().as_f64();
        let squarings = if norm > THETA_13 {
            (norm / THETA_13).log2().ceil() as i32
        } else {
            0
        };
        let a = self.scaled(Complex::new(T::lit(2f64.powi(-squarings)), T::zero()));
        let b = |k: usize| T::lit(B[k]);
        let id = Self::identity(n);
        let a2 = a.matmul(&a);
        let a4 = a2.matmul(&a2);
        let a6 = a4.matmul(&a2);
        let inner_u = a6
            .scaled(Complex::new(b(13), T::zero()))
            .axpy(b(11), &a4)
            .axpy(b(9), &a2);
        let u = a6
            .matmul(&inner_u)
            .axpy(b(7), &a6)
            .axpy(b(5), &a4)
            .axpy(b(3), &a2)
            .axpy(b(1), &id);
        let u = a.matmul(&u);
        let inner_v = a6
            .scaled(Complex::new(b(12), T::zero()))
            .axpy(b(10), &a4)
            .axpy(b(8), &a2);
        let v = a6
            .matmul(&inner_v)
            .axpy(b(6), &a6)
            .axpy(b(4), &a4)
            .axpy(b(2), &a2)
            .axpy(b(0), &id);
        let p = v.axpy(T::one(), &u);
        let q = v.axpy(-T::one(), &u);
        let mut r = q
            .solve(&p)
            .expect("Pade denominator is nonsingular for scaled input");
        for _ in 0..squarings {
            r = r.matmul(&r);
        }
        r
    }
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix by implicit
/// QL with Wilkinson shifts. `diag` has length `m`, `off` length `m − 1`.
/// Returns eigenvalues and the row-major eigenvector matrix (columns are
/// eigenvectors).
pub fn tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> (Vec<T>, Vec<T>) {
    let m = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); m];
    e[..off.len()].copy_from_slice(off);
    let mut z = vec![T::zero(); m * m];
    for i in 0..m {
        z[i * m + i] = T::one();
    }
    for l in 0..m {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < m {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= T::epsilon() * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            assert!(iter < 60, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            g = d[mm] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = mm;
            let mut early = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[mm] = T::zero();
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..m {
                    f = z[k * m + i + 1];
                    z[k * m + i + 1] = s * z[k * m + i] + c * f;
                    z[k * m + i] = c * z[k * m + i] - s * f;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = T::zero();
        }
    }
    (d, z)
}

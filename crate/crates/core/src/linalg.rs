//! Small dense complex matrices.
//!
//! Matrices here are per-link spatial statistics of size `N x N`, where `N`
//! is the AP antenna count (a handful of elements). Everything is row-major
//! and allocation-light; no attempt is made at blocking or SIMD.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::scalar::{Cx, Real};

/// Square complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CMat<T> {
    n: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(s, T::zero());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Rank-one outer product `u u^H` scaled by `s`.
    pub fn outer(u: &[Cx<T>], s: T) -> Self {
        Self::from_fn(u.len(), |i, j| u[i] * u[j].conj() * s)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Cx<T> {
        (0..self.n).map(|i| self[(i, i)]).fold(Complex::zero(), |a, b| a + b)
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> Cx<T> {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut acc = Complex::zero();
        for i in 0..n {
            for j in 0..n {
                acc = acc + self.data[i * n + j] * other.data[j * n + i];
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        debug_assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Largest absolute column sum.
    pub fn one_norm(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
    }

    pub fn max_hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    /// Returns `None` for an exactly singular pivot.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| {
                    a[(x, col)]
                        .norm()
                        .partial_cmp(&a[(y, col)].norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            if a[(pivot, col)].norm() == T::zero() {
                return None;
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let d = Complex::<T>::one() / a[(col, col)];
            for j in 0..n {
                a[(col, j)] = a[(col, j)] * d;
                inv[(col, j)] = inv[(col, j)] * d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == Complex::zero() {
                    continue;
                }
                for j in 0..n {
                    let ac = a[(col, j)];
                    let ic = inv[(col, j)];
                    a[(r, j)] = a[(r, j)] - f * ac;
                    inv[(r, j)] = inv[(r, j)] - f * ic;
                }
            }
        }
        Some(inv)
    }

    /// 1-norm condition number, `inf` when singular.
    pub fn condition_number(&self) -> T {
        match self.inverse() {
            Some(inv) => self.one_norm() * inv.one_norm(),
            None => T::infinity(),
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.n {
            self.data.swap(a * self.n + j, b * self.n + j);
        }
    }

    /// Eigen-decomposition of the Hermitian part by cyclic complex Jacobi
    /// rotations. Eigenvalues ascending; eigenvectors are the columns of the
    /// returned unitary matrix.
    pub fn eigh(&self) -> (Vec<T>, Self) {
        let n = self.n;
        let mut a = self.hermitian_part();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let off: T = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| a[(p, q)].norm_sqr())
                .sum();
            let total: T = a.data.iter().map(|z| z.norm_sqr()).sum();
            if off <= eps * eps * total || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    let r = apq.norm();
                    if r == T::zero() {
                        continue;
                    }
                    // Phase-align so the pivot is real, then a real rotation.
                    let ph = apq / r;
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let tau = (aqq - app) / (r + r);
                    let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    let u_pp = Complex::new(c, T::zero());
                    let u_pq = Complex::new(s, T::zero());
                    let u_qp = ph.conj() * (-s);
                    let u_qq = ph.conj() * c;
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = aip * u_pp + aiq * u_qp;
                        a[(i, q)] = aip * u_pq + aiq * u_qq;
                        let vip = v[(i, p)];
                        let viq = v[(i, q)];
                        v[(i, p)] = vip * u_pp + viq * u_qp;
                        v[(i, q)] = vip * u_pq + viq * u_qq;
                    }
                    for j in 0..n {
                        let apj = a[(p, j)];
                        let aqj = a[(q, j)];
                        a[(p, j)] = u_pp.conj() * apj + u_qp.conj() * aqj;
                        a[(q, j)] = u_pq.conj() * apj + u_qq.conj() * aqj;
                    }
                    a[(p, q)] = Complex::zero();
                    a[(q, p)] = Complex::zero();
                    a[(p, p)] = Complex::new(a[(p, p)].re, T::zero());
                    a[(q, q)] = Complex::new(a[(q, q)].re, T::zero());
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            a[(x, x)]
                .re
                .partial_cmp(&a[(y, y)].re)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, |i, j| v[(i, order[j])]);
        (values, vectors)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> T {
        self.eigh().0.first().copied().unwrap_or(T::zero())
    }

    /// Square-root factor `F` with `F F^H = self` for a Hermitian PSD
    /// matrix; small negative eigenvalues from rounding are clipped to zero.
    pub fn psd_sqrt(&self) -> Self {
        let (vals, vecs) = self.eigh();
        let roots: Vec<T> = vals.iter().map(|&x| x.max(T::zero()).sqrt()).collect();
        Self::from_fn(self.n, |i, j| vecs[(i, j)] * roots[j])
    }
}

impl<T> Index<(usize, usize)> for CMat<T> {
    type Output = Cx<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Add for &CMat<T> {
    type Output = CMat<T>;
    fn add(self, rhs: &CMat<T>) -> CMat<T> {
        debug_assert_eq!(self.n, rhs.n);
        CMat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMat<T> {
    type Output = CMat<T>;
    fn sub(self, rhs: &CMat<T>) -> CMat<T> {
        debug_assert_eq!(self.n, rhs.n);
        CMat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMat<T> {
    type Output = CMat<T>;
    fn mul(self, rhs: &CMat<T>) -> CMat<T> {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// Inner product `a^H b`.
pub fn dot_h<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter()
        .zip(b)
        .fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Dense row-major table indexed by `(row, col)`; used for per-link data
/// keyed by `(AP l, UE k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table<X> {
    rows: usize,
    cols: usize,
    data: Vec<X>,
}

impl<X> Table<X> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> X) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn try_from_fn<E>(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Result<X, E>,
    ) -> Result<Self, E> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c)?);
            }
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn iter(&self) -> impl Iterator<Item = &X> {
        self.data.iter()
    }

    pub fn map<Y>(&self, mut f: impl FnMut(&X) -> Y) -> Table<Y> {
        Table {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(&mut f).collect(),
        }
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = &X> + '_ {
        (0..self.rows).map(move |r| &self.data[r * self.cols + c])
    }
}

impl<X> Index<(usize, usize)> for Table<X> {
    type Output = X;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &X {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<X> IndexMut<(usize, usize)> for Table<X> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut X {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

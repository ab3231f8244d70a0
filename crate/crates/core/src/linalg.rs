//! Dense complex vectors and square matrices for small Hilbert spaces, plus a
//! deterministic Hermitian eigensolver.
//!
//! Everything here is sized for `d <= 16`. Matrices are stored row-major.
//! The eigensolver is a cyclic complex Jacobi iteration with a fixed sweep
//! order, so identical inputs give bit-identical spectra on every platform.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{One, Zero};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maximum number of Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative off-diagonal threshold (times `‖A‖_F`) for Jacobi convergence.
pub const JACOBI_REL_THRESHOLD: f64 = 1e-14;

/// Inline storage: qubit and qutrit-sized objects never touch the heap.
type VecBuf<T> = SmallVec<[Complex<T>; 4]>;
type MatBuf<T> = SmallVec<[Complex<T>; 16]>;

#[inline]
fn c<T: Scalar>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// State vector of a `d`-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector<T> {
    data: VecBuf<T>,
}

impl<T: Scalar> CVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: smallvec![Complex::zero(); dim],
        }
    }

    pub fn from_vec(data: Vec<Complex<T>>) -> Self {
        Self {
            data: SmallVec::from_vec(data),
        }
    }

    fn from_data(data: VecBuf<T>) -> Self {
        Self { data }
    }

    /// Builds a vector from `(re, im)` pairs given in f64.
    pub fn from_f64_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::from_data(
            pairs
                .iter()
                .map(|&(re, im)| c(T::lit(re), T::lit(im)))
                .collect(),
        )
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[k] = Complex::one();
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data.into_vec()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex<T>> {
        self.data.iter()
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * b)
    }

    /// Projective overlap `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`; zero if either vector vanishes.
    pub fn fidelity(&self, other: &Self) -> T {
        let na = self.norm_sqr();
        let nb = other.norm_sqr();
        if na <= T::zero() || nb <= T::zero() {
            return T::zero();
        }
        self.inner(other).norm_sqr() / (na * nb)
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self::from_data(self.data.iter().map(|z| z * factor).collect())
    }

    pub fn scale_real(&self, factor: T) -> Self {
        Self::from_data(self.data.iter().map(|z| z * factor).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > T::zero()) {
            return Err(Error::ZeroVector);
        }
        Ok(self.scale_real(n.recip()))
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Multiplies by a global phase so that the largest-magnitude component
    /// (first one among near-ties) is real and positive.
    pub fn fix_phase(&mut self) {
        let max = self
            .data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |m, x| if x > m { x } else { m })
            .sqrt();
        if !(max > T::zero()) {
            return;
        }
        let cutoff = max * (T::one() - T::lit(1e-9).max(T::epsilon() * T::lit(64.0)));
        let cutoff_sqr = cutoff * cutoff;
        let pivot = self
            .data
            .iter()
            .find(|z| z.norm_sqr() >= cutoff_sqr)
            .copied()
            .unwrap_or_else(Complex::one);
        let phase = pivot.conj() / pivot.norm_sqr().sqrt();
        for z in &mut self.data {
            *z = *z * phase;
        }
        // remove rounding residue on the pivot
        if let Some(z) = self.data.iter_mut().find(|z| z.norm_sqr() >= cutoff_sqr) {
            *z = c(z.norm_sqr().sqrt(), T::zero());
        }
    }

    /// Lexicographic comparison on `(re, im)` of successive components.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.data.iter().zip(&other.data) {
            let ord =
                a.re.partial_cmp(&b.re)
                    .unwrap_or(Ordering::Equal)
                    .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> CVector<U> {
        CVector::from_data(
            self.data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        )
    }
}

impl<T> Index<usize> for CVector<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, i: usize) -> &Complex<T> {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for CVector<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut Complex<T> {
        &mut self.data[i]
    }
}

impl<T: Scalar> Add for &CVector<T> {
    type Output = CVector<T>;
    fn add(self, rhs: Self) -> CVector<T> {
        CVector::from_data(
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl<T: Scalar> Sub for &CVector<T> {
    type Output = CVector<T>;
    fn sub(self, rhs: Self) -> CVector<T> {
        CVector::from_data(
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    dim: usize,
    data: MatBuf<T>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: smallvec![Complex::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = MatBuf::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from rows; fails unless the rows form a square.
    pub fn from_rows(rows: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = MatBuf::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    /// Row-major `(re, im)` pairs in f64; panics if the slice is not square.
    pub fn from_f64_pairs(dim: usize, pairs: &[(f64, f64)]) -> Self {
        assert_eq!(pairs.len(), dim * dim, "expected {} entries", dim * dim);
        Self {
            dim,
            data: pairs
                .iter()
                .map(|&(re, im)| c(T::lit(re), T::lit(im)))
                .collect(),
        }
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = c(v, T::zero());
        }
        m
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &CVector<T>, v: &CVector<T>) -> Self {
        let dim = u.dim();
        debug_assert_eq!(dim, v.dim());
        Self::from_fn(dim, |i, j| u[i] * v[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> CVector<T> {
        CVector::from_data((0..self.dim).map(|i| self[(i, j)]).collect())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), |m, x| if x > m { x } else { m })
    }

    /// `max |A - A†|` over entries.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst.sqrt()
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn mul_vec(&self, v: &CVector<T>) -> CVector<T> {
        debug_assert_eq!(self.dim, v.dim());
        CVector::from_data(
            (0..self.dim)
                .map(|i| {
                    self.row(i)
                        .iter()
                        .zip(v.iter())
                        .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
                })
                .collect(),
        )
    }

    /// `⟨u|A|v⟩`.
    pub fn sandwich(&self, u: &CVector<T>, v: &CVector<T>) -> Complex<T> {
        u.inner(&self.mul_vec(v))
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: Complex<T>, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + factor * b;
        }
    }

    /// `self += factor |u⟩⟨v|`.
    pub fn add_outer(&mut self, factor: Complex<T>, u: &CVector<T>, v: &CVector<T>) {
        let d = self.dim;
        debug_assert!(u.dim() == d && v.dim() == d);
        let v = v.as_slice();
        for (row, &ui) in self.data.chunks_exact_mut(d).zip(u.as_slice()) {
            let fu = factor * ui;
            for (a, vj) in row.iter_mut().zip(v) {
                *a = *a + fu * vj.conj();
            }
        }
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    /// Kronecker product `A ⊗ B`, with `B` the fast index.
    pub fn kron(&self, other: &Self) -> Self {
        let (da, db) = (self.dim, other.dim);
        Self::from_fn(da * db, |i, j| {
            self[(i / db, j / db)] * other[(i % db, j % db)]
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), |m, x| if x > m { x } else { m })
    }

    pub fn cast<U: Scalar>(&self) -> CMatrix<U> {
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.dim + j]
    }
}

impl<T: Scalar> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: Self) -> CMatrix<T> {
        debug_assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl<T: Scalar> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn sub(self, rhs: Self) -> CMatrix<T> {
        debug_assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl<T: Scalar> Neg for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn neg(self) -> CMatrix<T> {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| -a).collect(),
        }
    }
}

impl<T: Scalar> AddAssign<&CMatrix<T>> for CMatrix<T> {
    fn add_assign(&mut self, rhs: &CMatrix<T>) {
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a + b;
        }
    }
}

impl<T: Scalar> SubAssign<&CMatrix<T>> for CMatrix<T> {
    fn sub_assign(&mut self, rhs: &CMatrix<T>) {
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a - b;
        }
    }
}

impl<T: Scalar> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: Self) -> CMatrix<T> {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
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

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Vec<CVector<T>>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_i λ_i |φ_i⟩⟨φ_i|`.
    pub fn reconstruct(&self) -> CMatrix<T> {
        let d = self.dim();
        let mut out = CMatrix::zeros(d);
        for (&lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            out.add_scaled(c(lam, T::zero()), &CMatrix::outer(v, v));
        }
        out
    }

    /// Eigenvector matrix `U` with the eigenvectors as columns.
    pub fn eigenvector_matrix(&self) -> CMatrix<T> {
        let d = self.dim();
        CMatrix::from_fn(d, |i, j| self.eigenvectors[j][i])
    }

    pub fn min(&self) -> (T, &CVector<T>) {
        (self.eigenvalues[0], &self.eigenvectors[0])
    }
}

/// Diagonalizes a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// `tol` bounds `max |A - A†|`; only the Hermitian part of `a` is used.
/// Eigenvalues come back ascending, each eigenvector with its largest
/// component real and positive. Exact eigenvalue ties are ordered by the
/// lexicographic order of the eigenvectors.
pub fn hermitian_eig<T: Scalar>(a: &CMatrix<T>, tol: T) -> Result<SpectralDecomposition<T>> {
    let deviation = a.hermiticity_error();
    if !(deviation <= tol) {
        return Err(Error::NotHermitian {
            deviation: deviation.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let n = a.dim();
    if n == 2 {
        return Ok(eig2(a));
    }
    let mut m = a.hermitian_part();
    for i in 0..n {
        m[(i, i)] = c(m[(i, i)].re, T::zero());
    }
    let mut v = CMatrix::identity(n);

    let rel = T::lit(JACOBI_REL_THRESHOLD).max(T::epsilon() * T::lit(8.0));
    let threshold = rel * m.frobenius_norm();
    let skip = threshold / T::lit(n.max(1) as f64);

    let mut converged = false;
    let mut off = off_diagonal_norm(&m);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut m, &mut v, p, q, skip);
            }
        }
        off = off_diagonal_norm(&m);
    }
    if !converged && off > threshold {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off_norm: off.to_f64_lossy(),
        });
    }

    let mut pairs: Vec<(T, CVector<T>)> = (0..n)
        .map(|j| {
            let mut vec = v.column(j);
            vec.fix_phase();
            (m[(j, j)].re, vec)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        la.partial_cmp(lb)
            .unwrap_or(Ordering::Equal)
            .then_with(|| va.lex_cmp(vb))
    });
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Closed form for `2 × 2`, with the same threshold and conventions as the
/// Jacobi path.
fn eig2<T: Scalar>(a: &CMatrix<T>) -> SpectralDecomposition<T> {
    let half = T::lit(0.5);
    let p = a[(0, 0)].re;
    let d = a[(1, 1)].re;
    let b = (a[(0, 1)] + a[(1, 0)].conj()) * half;
    let frob = (p * p + d * d + (b.norm_sqr() + b.norm_sqr())).sqrt();
    let threshold = T::lit(JACOBI_REL_THRESHOLD).max(T::epsilon() * T::lit(8.0)) * frob;
    let b_abs = b.norm();
    if b_abs * T::SQRT_2() <= threshold {
        let mut pairs = [(p, CVector::basis(2, 0)), (d, CVector::basis(2, 1))];
        pairs.sort_by(|(la, va), (lb, vb)| {
            la.partial_cmp(lb)
                .unwrap_or(Ordering::Equal)
                .then_with(|| va.lex_cmp(vb))
        });
        let [(l0, v0), (l1, v1)] = pairs;
        return SpectralDecomposition {
            eigenvalues: vec![l0, l1],
            eigenvectors: vec![v0, v1],
        };
    }
    let mean = (p + d) * half;
    let h = (p - d) * half;
    let r = (h * h + b_abs * b_abs).sqrt();
    // eigenvector of the upper eigenvalue, from whichever row is better conditioned
    let (x, y) = if h >= T::zero() {
        (c(h + r, T::zero()), b.conj())
    } else {
        (b, c(r - h, T::zero()))
    };
    let scale = (x.norm_sqr() + y.norm_sqr()).sqrt().recip();
    let (x, y) = (x * scale, y * scale);
    let mut upper = CVector::from_data(smallvec![x, y]);
    let mut lower = CVector::from_data(smallvec![-y.conj(), x.conj()]);
    upper.fix_phase();
    lower.fix_phase();
    SpectralDecomposition {
        eigenvalues: vec![mean - r, mean + r],
        eigenvectors: vec![lower, upper],
    }
}

fn off_diagonal_norm<T: Scalar>(m: &CMatrix<T>) -> T {
    let n = m.dim();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Annihilates `m[p][q]` with the unitary `U = diag(1, e^{-iφ}) · R(θ)` acting
/// on the `(p, q)` plane, where `m[p][q] = r e^{iφ}`.
fn jacobi_rotate<T: Scalar>(m: &mut CMatrix<T>, v: &mut CMatrix<T>, p: usize, q: usize, skip: T) {
    let n = m.dim();
    let apq = m[(p, q)];
    let r = apq.norm();
    if !(r > skip) {
        return;
    }
    let phase = apq / r;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let theta = (aqq - app) / (r + r);
    let t = if theta >= T::zero() {
        T::one() / (theta + (theta * theta + T::one()).sqrt())
    } else {
        -T::one() / (-theta + (theta * theta + T::one()).sqrt())
    };
    let cs = T::one() / (t * t + T::one()).sqrt();
    let sn = t * cs;

    let u_pp = c(cs, T::zero());
    let u_pq = c(sn, T::zero());
    let u_qp = phase.conj() * (-sn);
    let u_qq = phase.conj() * cs;

    // m <- m U
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * u_pp + akq * u_qp;
        m[(k, q)] = akp * u_pq + akq * u_qq;
    }
    // m <- U† m
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        m[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    m[(p, q)] = Complex::zero();
    m[(q, p)] = Complex::zero();
    m[(p, p)] = c(m[(p, p)].re, T::zero());
    m[(q, q)] = c(m[(q, q)].re, T::zero());

    // v <- v U
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

/// `|ψ⟩⟨ψ|` without normalization; its trace is `‖ψ‖²`.
pub fn projector<T: Scalar>(psi: &CVector<T>) -> Result<CMatrix<T>> {
    if !(psi.norm_sqr() > T::zero()) {
        return Err(Error::ZeroVector);
    }
    Ok(CMatrix::outer(psi, psi))
}

/// Pauli matrices `(σ_x, σ_y, σ_z)`.
pub fn pauli<T: Scalar>() -> [CMatrix<T>; 3] {
    let (o, l, i) = (T::zero(), T::one(), T::one());
    [
        CMatrix::from_rows(vec![vec![c(o, o), c(l, o)], vec![c(l, o), c(o, o)]]).unwrap(),
        CMatrix::from_rows(vec![vec![c(o, o), c(o, -i)], vec![c(o, i), c(o, o)]]).unwrap(),
        CMatrix::from_rows(vec![vec![c(l, o), c(o, o)], vec![c(o, o), c(-l, o)]]).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::{any, prop_assert, prop_assume, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = CMatrix<f64>;
    type V = CVector<f64>;

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> M {
        let b = M::from_fn(d, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        &b + &b.adjoint()
    }

    fn check_decomposition(a: &M, spec: &SpectralDecomposition<f64>) {
        let scale = a.frobenius_norm().max(1.0);
        let err = (&spec.reconstruct() - a).frobenius_norm();
        assert!(err <= 1e-10 * scale, "reconstruction error {err}");
        let u = spec.eigenvector_matrix();
        let gram = &u.adjoint() * &u;
        assert!(gram.max_abs_diff(&M::identity(a.dim())) <= 1e-10);
        assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn qubit_closed_form_agrees_with_jacobi() {
        // embed A ⊕ (10) so the 3×3 Jacobi path sees the same 2×2 block
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let a = random_hermitian(2, &mut rng);
            let big = M::from_fn(3, |i, j| match (i, j) {
                (2, 2) => Complex64::new(10.0, 0.0),
                (i, j) if i < 2 && j < 2 => a[(i, j)],
                _ => Complex64::new(0.0, 0.0),
            });
            let small = hermitian_eig(&a, 1e-10).unwrap();
            let full = hermitian_eig(&big, 1e-10).unwrap();
            check_decomposition(&a, &small);
            for k in 0..2 {
                assert!((small.eigenvalues[k] - full.eigenvalues[k]).abs() < 1e-12);
                let w = &full.eigenvectors[k];
                assert!(w[2].norm() < 1e-12);
                let v = &small.eigenvectors[k];
                assert!((v[0] - w[0]).norm() < 1e-10 && (v[1] - w[1]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_spectrum() {
        let spec = hermitian_eig(&M::identity(2), 1e-10).unwrap();
        assert_eq!(spec.eigenvalues, vec![1.0, 1.0]);
        check_decomposition(&M::identity(2), &spec);
        for v in &spec.eigenvectors {
            let k = (0..2)
                .max_by(|&a, &b| v[a].norm().partial_cmp(&v[b].norm()).unwrap())
                .unwrap();
            assert!(v[k].im == 0.0 && v[k].re > 0.0);
        }
    }

    #[test]
    fn pauli_x_spectrum() {
        let [sx, _, _] = pauli::<f64>();
        let spec = hermitian_eig(&sx, 1e-10).unwrap();
        assert!((spec.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let minus = V::from_f64_pairs(&[(h, 0.0), (-h, 0.0)]);
        let plus = V::from_f64_pairs(&[(h, 0.0), (h, 0.0)]);
        assert!((&spec.eigenvectors[0] - &minus).norm() < 1e-12);
        assert!((&spec.eigenvectors[1] - &plus).norm() < 1e-12);
    }

    #[test]
    fn pauli_y_eigenvectors_follow_phase_convention() {
        let [_, sy, _] = pauli::<f64>();
        let spec = hermitian_eig(&sy, 1e-10).unwrap();
        check_decomposition(&sy, &spec);
        for v in &spec.eigenvectors {
            assert_eq!(v[0].im, 0.0);
            assert!(v[0].re > 0.0);
        }
    }

    #[test]
    fn random_hermitian_4x4_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_hermitian(4, &mut rng);
            let spec = hermitian_eig(&a, 1e-10).unwrap();
            check_decomposition(&a, &spec);
            let tr: f64 = spec.eigenvalues.iter().sum();
            assert!((tr - a.trace().re).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_and_zero_matrices() {
        let zero = M::zeros(3);
        let spec = hermitian_eig(&zero, 1e-10).unwrap();
        assert_eq!(spec.eigenvalues, vec![0.0; 3]);
        check_decomposition(&zero, &spec);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 5;
        let h = random_hermitian(d, &mut rng);
        let basis = hermitian_eig(&h, 1e-10).unwrap().eigenvector_matrix();
        let a = &(&basis * &M::diagonal(&[1.0, 1.0, 1.0, -2.0, -2.0])) * &basis.adjoint();
        let spec = hermitian_eig(&a, 1e-10).unwrap();
        check_decomposition(&a, &spec);
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = M::from_f64_pairs(2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert!(matches!(
            hermitian_eig(&a, 1e-10),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(6, &mut rng);
        let s1 = hermitian_eig(&a, 1e-10).unwrap();
        let s2 = hermitian_eig(&a.clone(), 1e-10).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn f32_decomposition() {
        let a =
            CMatrix::<f32>::from_f64_pairs(2, &[(1.0, 0.0), (0.5, -0.5), (0.5, 0.5), (-1.0, 0.0)]);
        let spec = hermitian_eig(&a, 1e-5).unwrap();
        let err = (&spec.reconstruct() - &a).frobenius_norm();
        assert!(err < 1e-5);
    }

    #[test]
    fn projector_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = projector(&V::basis(2, 0)).unwrap();
        assert_eq!(
            p,
            M::from_f64_pairs(2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)])
        );

        let p = projector(&V::from_f64_pairs(&[(h, 0.0), (h, 0.0)])).unwrap();
        let want = M::from_f64_pairs(2, &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)]);
        assert!(p.max_abs_diff(&want) < 1e-15);

        let p = projector(&V::from_f64_pairs(&[(h, 0.0), (0.0, h)])).unwrap();
        let want = M::from_f64_pairs(2, &[(0.5, 0.0), (0.0, -0.5), (0.0, 0.5), (0.5, 0.0)]);
        assert!(p.max_abs_diff(&want) < 1e-15);

        assert!(matches!(projector(&V::zeros(2)), Err(Error::ZeroVector)));
    }

    proptest! {
        #[test]
        fn eig_invariants(seed in any::<u64>(), d in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian(d, &mut rng);
            let spec = hermitian_eig(&a, 1e-10).unwrap();
            check_decomposition(&a, &spec);
            let tr: f64 = spec.eigenvalues.iter().sum();
            prop_assert!((tr - a.trace().re).abs() <= 1e-10 * a.frobenius_norm().max(1.0));
        }

        #[test]
        fn projector_is_hermitian_with_norm_trace(re in proptest::collection::vec(-2.0f64..2.0, 6),
                                                  im in proptest::collection::vec(-2.0f64..2.0, 6)) {
            let v = V::from_vec(re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect());
            prop_assume!(v.norm() > 1e-3);
            let p = projector(&v).unwrap();
            prop_assert!(p.hermiticity_error() < 1e-12);
            prop_assert!((p.trace().re - v.norm_sqr()).abs() < 1e-12);
            let pn = projector(&v.normalized().unwrap()).unwrap();
            prop_assert!((&pn * &pn).max_abs_diff(&pn) < 1e-12);
        }
    }
}

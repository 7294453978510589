//! Banded storage, banded LU with partial pivoting, and inertia counts for
//! symmetric banded matrices.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field element usable by the banded solvers (real or complex double).
pub trait Scalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// Square matrix with `kl` sub- and `ku` super-diagonals.
///
/// Rows are stored with `kl` extra columns of head-room on the right so the LU
/// factorisation can absorb pivoting fill-in in place.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }
    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            T::zero()
        }
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Column range of row `i` inside the band.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = T::zero();
                for j in self.row_range(i) {
                    acc += self.data[self.slot(i, j)] * x[j];
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `self - shift * I`, converted into another scalar field.
    pub fn shifted<U: Scalar>(&self, shift: U, conv: impl Fn(T) -> U) -> BandMatrix<U> {
        let mut out = BandMatrix::<U>::zeros(self.n, self.kl, self.ku);
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.set(i, j, conv(self.get(i, j)));
            }
            out.add_to(i, i, -shift);
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in self.row_range(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).modulus());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// LU factorisation with partial (row) pivoting.
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.modulus())).max(f64::MIN_POSITIVE);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].modulus();
            for i in k + 1..=last {
                let m = self.data[self.slot(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= scale * 1e-300 || best == 0.0 {
                return Err(Error::SingularSystem(format!("zero pivot in column {k}")));
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l == T::zero() {
                    continue;
                }
                let base_i = self.slot(i, k + 1);
                let base_k = self.slot(k, k + 1);
                for off in 0..jmax.saturating_sub(k) {
                    let u = self.data[base_k + off];
                    self.data[base_i + off] -= l * u;
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Factored form of a [`BandMatrix`].
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= m.data[m.slot(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + ku + kl).min(n - 1) {
                acc -= m.data[m.slot(k, j)] * b[j];
            }
            b[k] = acc / m.data[m.slot(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Number of eigenvalues of the symmetric banded matrix `a` that are strictly
/// less than `sigma` (Sylvester's law of inertia on an LDLᵀ of `a - sigma I`).
///
/// No pivoting; an exactly-zero pivot is nudged to a tiny positive value,
/// which is the usual treatment in bisection codes.
pub fn count_below(a: &BandMatrix<f64>, sigma: f64) -> usize {
    let n = a.n;
    let b = a.kl.max(a.ku);
    // Upper-triangular band of U in U = D Lᵀ, row-major, width b+1.
    let w = b + 1;
    let mut u = vec![0.0; n * w];
    for i in 0..n {
        for d in 0..w {
            let j = i + d;
            if j < n {
                u[i * w + d] = a.get(i, j) - if d == 0 { sigma } else { 0.0 };
            }
        }
    }
    let tiny = f64::EPSILON * (1.0 + sigma.abs());
    let mut neg = 0;
    for k in 0..n {
        let mut pivot = u[k * w];
        if pivot.abs() < tiny {
            pivot = tiny;
            u[k * w] = pivot;
        }
        if pivot < 0.0 {
            neg += 1;
        }
        let last = (k + b).min(n - 1);
        for i in k + 1..=last {
            let l = u[k * w + (i - k)] / pivot;
            if l == 0.0 {
                continue;
            }
            for j in i..=last {
                let ukj = u[k * w + (j - k)];
                u[i * w + (j - i)] -= l * ukj;
            }
        }
    }
    neg
}

/// Largest `m` eigenvalues of a symmetric banded matrix, descending, by
/// inertia bisection to absolute accuracy `tol`.
pub fn top_eigenvalues_symmetric(a: &BandMatrix<f64>, m: usize, tol: f64) -> Vec<f64> {
    let n = a.n;
    let m = m.min(n);
    // Gershgorin enclosure.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r: f64 = a.row_range(i).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
        lo = lo.min(a.get(i, i) - r);
        hi = hi.max(a.get(i, i) + r);
    }
    lo -= 1.0;
    hi += 1.0;
    (0..m)
        .map(|k| {
            // k-th largest is the (n-k)-th smallest: count_below(x) <= n-k-1 means x <= it.
            let target = n - k - 1;
            let (mut a_lo, mut a_hi) = (lo, hi);
            while a_hi - a_lo > tol * (1.0 + a_lo.abs().min(a_hi.abs())) {
                let mid = 0.5 * (a_lo + a_hi);
                if count_below(a, mid) <= target {
                    a_lo = mid;
                } else {
                    a_hi = mid;
                }
            }
            0.5 * (a_lo + a_hi)
        })
        .collect()
}

/// Eigenvector for an (already accurate) eigenvalue estimate by inverse
/// iteration; the returned vector has unit Euclidean norm.
pub fn inverse_iteration<T: Scalar>(
    a: &BandMatrix<T>,
    shift: T,
    start: &[T],
    iters: usize,
) -> Result<Vec<T>> {
    let n = a.dim();
    // Perturb the shift slightly so the factorisation is not exactly singular.
    let scale = shift.modulus().max(1.0);
    let eps = T::from_real(1e-10 * scale);
    let lu = a.shifted(shift + eps, |v| v).lu()?;
    let mut x = start.to_vec();
    assert_eq!(x.len(), n);
    normalize(&mut x);
    for _ in 0..iters {
        lu.solve_in_place(&mut x);
        normalize(&mut x);
    }
    Ok(x)
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let nrm = x.iter().map(|v| v.modulus().powi(2)).sum::<f64>().sqrt();
    if nrm > 0.0 {
        let inv = T::from_real(1.0 / nrm);
        for v in x.iter_mut() {
            *v = *v * inv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in a.row_range(i) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn band_lu_matches_dense_solve() {
        for (kl, ku) in [(1, 1), (2, 2), (3, 1), (0, 2)] {
            let a = random_band(40, kl, ku, 7 + kl as u64);
            let b: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
            let x = a.clone().lu().unwrap().solve(&b);
            let dense = DMatrix::from_fn(40, 40, |i, j| a.get(i, j));
            let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            for i in 0..40 {
                assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()), "kl={kl} ku={ku}");
            }
        }
    }

    #[test]
    fn complex_band_lu_residual() {
        let n = 30;
        let mut a = BandMatrix::<Complex64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in a.row_range(i) {
                let v = Complex64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64);
                a.set(i, j, v);
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let x = a.clone().lu().unwrap().solve(&b);
        let r = a.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let a = BandMatrix::<f64>::zeros(5, 1, 1);
        assert!(matches!(a.lu(), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn inertia_bisection_matches_dense_eigenvalues() {
        let n = 60;
        let mut a = BandMatrix::<f64>::zeros(n, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..n {
            for d in 0..=2 {
                if i + d < n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    a.set(i, i + d, v);
                    a.set(i + d, i, v);
                }
            }
        }
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let mut ev: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top = top_eigenvalues_symmetric(&a, 10, 1e-14);
        for k in 0..10 {
            assert!((top[k] - ev[k]).abs() < 1e-10, "{k}: {} vs {}", top[k], ev[k]);
        }
    }

    #[test]
    fn inverse_iteration_finds_eigenvector() {
        // 1D Dirichlet Laplacian: eigenvectors are discrete sines.
        let n = 50;
        let mut a = BandMatrix::<f64>::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, -2.0);
            if i + 1 < n {
                a.set(i, i + 1, 1.0);
                a.set(i + 1, i, 1.0);
            }
        }
        let lam = top_eigenvalues_symmetric(&a, 1, 1e-15)[0];
        let exact = -4.0 * (std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2);
        assert!((lam - exact).abs() < 1e-12);
        let v = inverse_iteration(&a, lam, &vec![1.0; n], 3).unwrap();
        let av = a.matvec(&v);
        for i in 0..n {
            assert!((av[i] - lam * v[i]).abs() < 1e-9);
        }
    }
}

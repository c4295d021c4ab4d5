//! Dense Hermitian matrices, the Hilbert-Schmidt geometry of H(n), and the
//! spectral primitives the rest of the crate is built on.
//!
//! Storage is full row-major `n×n` complex; the conjugate-symmetric lower
//! triangle is always written explicitly so readers never need to mirror.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-13;

/// A dense Hermitian matrix, an element of H(n).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<C64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &x) in d.iter().enumerate() {
            m.data[i * n + i] = C64::new(x, 0.0);
        }
        m
    }

    /// Unit diagonal projector `e_i e_i*`.
    pub fn unit_diag(n: usize, i: usize) -> Self {
        let mut m = Self::zeros(n);
        m.data[i * n + i] = C64::new(1.0, 0.0);
        m
    }

    /// Builds a matrix from a closure evaluated on the upper triangle
    /// (`j <= l`); the lower triangle is the conjugate mirror and the
    /// imaginary part of the diagonal is dropped.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.data[j * n + j] = C64::new(f(j, j).re, 0.0);
            for l in (j + 1)..n {
                let z = f(j, l);
                m.data[j * n + l] = z;
                m.data[l * n + j] = z.conj();
            }
        }
        m
    }

    /// Accepts full row-major entries, checking conjugate symmetry within `tol`
    /// and then symmetrizing exactly.
    pub fn from_entries(n: usize, entries: Vec<C64>, tol: f64) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        for j in 0..n {
            for l in j..n {
                let d = entries[j * n + l] - entries[l * n + j].conj();
                if d.norm() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({j},{l}) is not conjugate-symmetric (defect {:e})",
                        d.norm()
                    )));
                }
            }
        }
        Ok(Self::from_upper_fn(n, |j, l| {
            if j == l {
                entries[j * n + j]
            } else {
                (entries[j * n + l] + entries[l * n + j].conj()) * 0.5
            }
        }))
    }

    /// Rank-one matrix `x x*`.
    pub fn outer(x: &[C64]) -> Self {
        Self::from_upper_fn(x.len(), |j, l| x[j] * x[l].conj())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, l: usize) -> C64 {
        self.data[j * self.n + l]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &HermitianMatrix) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for j in 0..n {
            for l in j..n {
                worst = worst.max((self.data[j * n + l] - self.data[l * n + j].conj()).norm());
            }
        }
        worst
    }

    /// `x* A x`, real for Hermitian `A`.
    pub fn quadratic_form(&self, x: &[C64]) -> f64 {
        let n = self.n;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for l in 0..n {
                row += self.data[j * n + l] * x[l];
            }
            acc += x[j].conj() * row;
        }
        acc.re
    }

    /// Coordinates in the orthonormal basis of H(n) made of the diagonal
    /// units followed, antidiagonal by antidiagonal and position by position,
    /// by the real/imaginary pair `ι_k(e_p)`, `ι_k(i e_p)`.
    ///
    /// The map is an isometry: `hs_inner(A, B) = <A.coords(), B.coords()>`.
    pub fn coords(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            out.push(self.data[i * n + i].re);
        }
        let s2 = std::f64::consts::SQRT_2;
        for k in 1..n.saturating_mul(2).saturating_sub(2) {
            for (j, l) in antidiag_positions(n, k) {
                let z = self.data[j * n + l];
                out.push(s2 * z.re);
                out.push(s2 * z.im);
            }
        }
        out
    }

    /// Inverse of [`HermitianMatrix::coords`].
    pub fn from_coords(n: usize, c: &[f64]) -> Result<Self> {
        if c.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: c.len(),
            });
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(c[i], 0.0);
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut idx = n;
        for k in 1..n.saturating_mul(2).saturating_sub(2) {
            for (j, l) in antidiag_positions(n, k) {
                let z = C64::new(c[idx] * h, c[idx + 1] * h);
                m.data[j * n + l] = z;
                m.data[l * n + j] = z.conj();
                idx += 2;
            }
        }
        Ok(m)
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        HermitianMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        HermitianMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

/// Hilbert-Schmidt inner product `tr(AB)`.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    // tr(AB) = sum_{jl} A_jl B_lj = sum_{jl} A_jl conj(B_jl)
    Ok(a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x * y.conj()).re)
        .sum())
}

/// Eigenvalues in non-increasing order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigSpectrum {
    pub values: Vec<f64>,
    /// `vectors[i]` belongs to `values[i]`.
    pub vectors: Vec<Vec<C64>>,
}

impl EigSpectrum {
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.values.len();
        let mut m = HermitianMatrix::zeros(n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            m.axpy(*lam, &HermitianMatrix::outer(v));
        }
        m
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Ordered eigendecomposition by cyclic complex Jacobi.
pub fn eig_ordered(a: &HermitianMatrix) -> Result<EigSpectrum> {
    let n = a.n;
    let mut work = a.data.clone();
    let mut v = identity_entries(n);
    jacobi(&mut work, &mut v, n)?;
    Ok(collect_sorted(&work, &v, n))
}

/// Same as [`eig_ordered`] but starts from the eigenbasis of a nearby matrix.
/// Iterative solvers call this with the previous iterate's spectrum; a good
/// guess leaves an almost diagonal matrix and Jacobi finishes in a sweep or two.
pub(crate) fn eig_ordered_warm(a: &HermitianMatrix, guess: &EigSpectrum) -> Result<EigSpectrum> {
    let n = a.n;
    if guess.vectors.len() != n {
        return eig_ordered(a);
    }
    // W has the guess vectors as columns; B = W* A W.
    let mut w = vec![C64::new(0.0, 0.0); n * n];
    for (c, vec) in guess.vectors.iter().enumerate() {
        for r in 0..n {
            w[r * n + c] = vec[r];
        }
    }
    let aw = matmul(&a.data, &w, n);
    let mut b = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += w[k * n + i].conj() * aw[k * n + j];
            }
            b[i * n + j] = acc;
        }
    }
    for i in 0..n {
        b[i * n + i].im = 0.0;
        for j in (i + 1)..n {
            let z = (b[i * n + j] + b[j * n + i].conj()) * 0.5;
            b[i * n + j] = z;
            b[j * n + i] = z.conj();
        }
    }
    let mut v = identity_entries(n);
    jacobi(&mut b, &mut v, n)?;
    let wv = matmul(&w, &v, n);
    Ok(collect_sorted(&b, &wv, n))
}

fn identity_entries(n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = C64::new(1.0, 0.0);
    }
    v
}

fn matmul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn off_diag_norm(a: &[C64], n: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..n {
        for l in 0..n {
            if j != l {
                s += a[j * n + l].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn jacobi(a: &mut [C64], v: &mut [C64], n: usize) -> Result<()> {
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 || n < 2 {
        return Ok(());
    }
    let tol = JACOBI_REL_TOL * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diag_norm(a, n) <= tol {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[p * n + q];
                let babs = b.norm();
                if babs <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = b / babs;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * babs);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane.
                let upp = C64::new(c, 0.0);
                let upq = C64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * upp + akq * uqp;
                    a[k * n + q] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * upp.conj() + aqk * uqp.conj();
                    a[q * n + k] = apk * upq.conj() + aqk * uqq.conj();
                }
                a[p * n + q] = C64::new(0.0, 0.0);
                a[q * n + p] = C64::new(0.0, 0.0);
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * upp + vkq * uqp;
                    v[k * n + q] = vkp * upq + vkq * uqq;
                }
            }
        }
    }
    let off = off_diag_norm(a, n);
    if off <= tol {
        return Ok(());
    }
    Err(Error::EigNoConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
        off_norm: off,
    })
}

fn collect_sorted(a: &[C64], v: &[C64], n: usize) -> EigSpectrum {
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep the solver's output order
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = order
        .iter()
        .map(|&c| (0..n).map(|r| v[r * n + c]).collect())
        .collect();
    EigSpectrum { values, vectors }
}

/// Length of the upper half of the `k`-th antidiagonal of an `n×n` matrix.
pub fn gamma(n: usize, k: usize) -> Result<usize> {
    let hi = (2 * n).saturating_sub(3);
    if k < 1 || k > hi {
        return Err(Error::IndexOutOfRange { index: k, lo: 1, hi });
    }
    Ok(if k < n { k.div_ceil(2) } else { n - 1 - k / 2 })
}

/// Strictly-upper positions `(j, l)` with `j + l = k`, smaller row first.
pub fn antidiag_positions(n: usize, k: usize) -> Vec<(usize, usize)> {
    let start = k.saturating_sub(n.saturating_sub(1));
    (start..)
        .take_while(|&j| j < k - j)
        .map(|j| (j, k - j))
        .collect()
}

/// The inclusion `ι_k`: places `v/√2` on the upper half of antidiagonal `k`
/// (position `p` counted from the smallest row) and the conjugate below.
pub fn antidiag_include(n: usize, k: usize, v: &[C64]) -> Result<HermitianMatrix> {
    let g = gamma(n, k)?;
    if v.len() != g {
        return Err(Error::LengthMismatch {
            expected: g,
            got: v.len(),
        });
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = HermitianMatrix::zeros(n);
    for (p, (j, l)) in antidiag_positions(n, k).into_iter().enumerate() {
        let z = v[p] * h;
        m.data[j * n + l] = z;
        m.data[l * n + j] = z.conj();
    }
    Ok(m)
}

/// `ι_k` of a real vector.
pub fn antidiag_include_real(n: usize, k: usize, v: &[f64]) -> Result<HermitianMatrix> {
    let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    antidiag_include(n, k, &c)
}

/// `ι_k(i v)` for a real vector `v`.
pub fn antidiag_include_imag(n: usize, k: usize, v: &[f64]) -> Result<HermitianMatrix> {
    let c: Vec<C64> = v.iter().map(|&x| C64::new(0.0, x)).collect();
    antidiag_include(n, k, &c)
}

/// Nearest PSD matrix in Frobenius norm: clamp the negative spectrum.
pub fn psd_project(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let spec = eig_ordered(a)?;
    Ok(clamp_spectrum(&spec))
}

pub(crate) fn clamp_spectrum(spec: &EigSpectrum) -> HermitianMatrix {
    let n = spec.values.len();
    let mut m = HermitianMatrix::zeros(n);
    for (lam, v) in spec.values.iter().zip(&spec.vectors) {
        if *lam > 0.0 {
            m.axpy(*lam, &HermitianMatrix::outer(v));
        }
    }
    m
}

/// Default relative tolerance for eigenvalue sign decisions.
pub fn default_sign_tol(a: &HermitianMatrix) -> f64 {
    1e-8 * a.frobenius_norm().max(1.0)
}

/// Number of eigenvalues above `tol` and below `-tol`.
pub fn signed_eig_counts(a: &HermitianMatrix, tol: f64) -> Result<(usize, usize)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let spec = eig_ordered(a)?;
    Ok(count_signs(&spec.values, tol))
}

pub(crate) fn count_signs(values: &[f64], tol: f64) -> (usize, usize) {
    let pos = values.iter().filter(|&&x| x > tol).count();
    let neg = values.iter().filter(|&&x| x < -tol).count();
    (pos, neg)
}

//! Dense complex matrices and the handful of linear-algebra helpers used
//! throughout the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Absolute tolerance for Hermiticity / unitarity / normalization predicates.
pub const HERM_TOL: f64 = 1e-8;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub fn cone() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// tr(a b) without forming the product.
pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    let mut acc = czero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    hermitian_deviation(m) <= tol
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    let d = m.nrows();
    let id = CMatrix::identity(d, d);
    max_abs_diff(&(m.adjoint() * m), &id) <= tol
}

pub fn check_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let dev = hermitian_deviation(m);
    if dev > tol {
        return Err(Error::NotHermitian { dev, tol });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let se = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = DVector::from_iterator(idx.len(), idx.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMatrix::zeros(m.nrows(), m.ncols());
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Spectral norm of a Hermitian matrix (largest |eigenvalue|).
pub fn spectral_norm_hermitian(m: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Trace norm (sum of singular values). For Hermitian input this is the sum
/// of absolute eigenvalues, which is how it is computed here.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals.iter().map(|v| v.abs()).sum()
}

/// exp(-i H t) for Hermitian H via eigendecomposition.
pub fn evolution_operator(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(h);
    let d = h.nrows();
    let mut phases = CMatrix::zeros(d, d);
    for k in 0..d {
        phases[(k, k)] = (-Complex64::i() * vals[k] * t).exp();
    }
    &vecs * phases * vecs.adjoint()
}

pub fn outer(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

pub fn expectation(obs: &CMatrix, psi: &CVector) -> f64 {
    let v = obs * psi;
    psi.dotc(&v).re
}

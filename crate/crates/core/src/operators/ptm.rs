//! Pauli transfer matrices: the real-matrix representation of superoperators
//! in the Pauli basis, used both as a verification tool and as the linear
//! system behind the quasi-probability compilation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::matrix::{trace_prod, CMatrix};
use super::pauli::PauliBasis;
use crate::error::{Error, Result};

/// Maximum imaginary residue tolerated when projecting a
/// Hermiticity-preserving map onto a real transfer matrix.
const REALITY_TOL: f64 = 1e-9;

/// Complex projection of a linear superoperator onto the Pauli basis:
/// entry (a, b) = tr(V_a f(V_b)) / 2^n.
///
/// For Hermiticity-preserving maps the result is real; the general complex
/// form is needed when decomposing the one-sided products that appear in the
/// recovery-operator expansion.
pub fn superop_pauli_matrix<F>(basis: &PauliBasis, mut f: F) -> CMatrix
where
    F: FnMut(&CMatrix) -> CMatrix,
{
    let m = basis.len();
    let norm = 1.0 / basis.dim() as f64;
    let mut out = CMatrix::zeros(m, m);
    for b in 0..m {
        let image = f(basis.element(b));
        for a in 0..m {
            out[(a, b)] = trace_prod(basis.element(a), &image) * norm;
        }
    }
    out
}

/// Real Pauli transfer matrix of a Hermiticity-preserving superoperator.
#[derive(Debug, Clone)]
pub struct Ptm {
    n: usize,
    mat: DMatrix<f64>,
}

impl Ptm {
    pub fn of_superop<F>(basis: &PauliBasis, f: F) -> Result<Self>
    where
        F: FnMut(&CMatrix) -> CMatrix,
    {
        let complex = superop_pauli_matrix(basis, f);
        Self::from_complex(basis.n(), &complex)
    }

    pub fn from_complex(n: usize, complex: &CMatrix) -> Result<Self> {
        let residue = complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if residue > REALITY_TOL {
            return Err(Error::NonRealPtm { residue });
        }
        let mat = DMatrix::from_fn(complex.nrows(), complex.ncols(), |a, b| complex[(a, b)].re);
        Ok(Self { n, mat })
    }

    pub fn from_real(n: usize, mat: DMatrix<f64>) -> Self {
        Self { n, mat }
    }

    pub fn identity(n: usize) -> Self {
        let m = 4usize.pow(n as u32);
        Self {
            n,
            mat: DMatrix::identity(m, m),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn max_abs_diff(&self, other: &Ptm) -> f64 {
        (&self.mat - &other.mat)
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }

    /// A map is trace preserving iff its first row is (1, 0, ..., 0).
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let mut dev: f64 = (self.mat[(0, 0)] - 1.0).abs();
        for b in 1..self.mat.ncols() {
            dev = dev.max(self.mat[(0, b)].abs());
        }
        dev <= tol
    }

    /// Apply the represented superoperator to a density-like matrix by
    /// expanding it in the Pauli basis and recombining.
    pub fn apply(&self, basis: &PauliBasis, rho: &CMatrix) -> CMatrix {
        let coeffs = basis.coefficients(rho);
        let dim = basis.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for a in 0..basis.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..basis.len() {
                acc += Complex64::new(self.mat[(a, b)], 0.0) * coeffs[b];
            }
            out += basis.element(a) * acc;
        }
        out
    }
}

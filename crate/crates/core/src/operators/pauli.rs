//! Pauli-string bases for 1..=3 qubits.
//!
//! Ordering is lexicographic in the letters I < X < Y < Z with the leftmost
//! qubit most significant, so index 0 is always the identity string. This
//! fixed ordering is what makes coefficient indices reproducible across runs.

use num_complex::Complex64;

use super::matrix::{c64, kron, trace_prod, CMatrix};
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 3;

pub fn identity2() -> CMatrix {
    CMatrix::identity(2, 2)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

fn single(letter: usize) -> CMatrix {
    match letter {
        0 => identity2(),
        1 => sigma_x(),
        2 => sigma_y(),
        3 => sigma_z(),
        _ => unreachable!(),
    }
}

const LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// The ordered basis of 4^n Pauli strings.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    n: usize,
    elems: Vec<CMatrix>,
    labels: Vec<String>,
}

impl PauliBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::QubitCount { n, max: MAX_QUBITS });
        }
        let count = 4usize.pow(n as u32);
        let mut elems = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for idx in 0..count {
            let mut m = CMatrix::identity(1, 1);
            let mut label = String::with_capacity(n);
            for q in 0..n {
                let letter = (idx >> (2 * (n - 1 - q))) & 0b11;
                m = kron(&m, &single(letter));
                label.push(LETTERS[letter]);
            }
            elems.push(m);
            labels.push(label);
        }
        Ok(Self { n, elems, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Hilbert-space dimension 2^n.
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// Number of basis elements 4^n.
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn element(&self, idx: usize) -> &CMatrix {
        &self.elems[idx]
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CMatrix> {
        self.elems.iter()
    }

    /// Expansion coefficients of `op`: op = sum_a coeff[a] * V_a with
    /// coeff[a] = tr(V_a op) / 2^n.
    pub fn coefficients(&self, op: &CMatrix) -> Vec<Complex64> {
        let norm = 1.0 / self.dim() as f64;
        self.elems
            .iter()
            .map(|v| trace_prod(v, op) * norm)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::matrix::{max_abs_diff, trace_prod};

    #[test]
    fn single_qubit_enumeration() {
        let b = PauliBasis::new(1).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.label(0), "I");
        assert!(max_abs_diff(b.element(0), &identity2()) == 0.0);
        assert!(max_abs_diff(b.element(1), &sigma_x()) == 0.0);
        assert!(max_abs_diff(b.element(2), &sigma_y()) == 0.0);
        assert!(max_abs_diff(b.element(3), &sigma_z()) == 0.0);
    }

    #[test]
    fn two_qubit_order_and_extremes() {
        let b = PauliBasis::new(2).unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(b.label(0), "II");
        assert_eq!(b.label(15), "ZZ");
        let zz = kron(&sigma_z(), &sigma_z());
        assert!(max_abs_diff(b.element(15), &zz) == 0.0);
        // leftmost qubit most significant: index 4 = XI
        assert_eq!(b.label(4), "XI");
    }

    #[test]
    fn orthogonality_all_pairs_two_qubits() {
        // tr(V_a V_b^dag) = 2^n delta_ab, checked over all 256 pairs
        let b = PauliBasis::new(2).unwrap();
        for a in 0..b.len() {
            for bb in 0..b.len() {
                let t = trace_prod(b.element(a), &b.element(bb).adjoint());
                let expect = if a == bb { 4.0 } else { 0.0 };
                assert!(
                    (t.re - expect).abs() < 1e-12 && t.im.abs() < 1e-12,
                    "pair ({a},{bb}) -> {t}"
                );
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(PauliBasis::new(0).is_err());
        assert!(PauliBasis::new(4).is_err());
    }

    #[test]
    fn coefficients_round_trip() {
        let b = PauliBasis::new(1).unwrap();
        let op = sigma_x() * c64(0.5, 0.0) + sigma_z() * c64(-0.25, 1.0);
        let coeffs = b.coefficients(&op);
        let mut back = CMatrix::zeros(2, 2);
        for (cc, v) in coeffs.iter().zip(b.iter()) {
            back += v * *cc;
        }
        assert!(max_abs_diff(&back, &op) < 1e-14);
    }
}

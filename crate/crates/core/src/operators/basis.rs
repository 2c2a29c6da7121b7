//! The 16-element single-qubit basis of recovery operations and its
//! tensor-product extension to two qubits.
//!
//! Every operation is a single-Kraus map rho -> K rho K^dag. Operations 0..=9
//! (table positions 1..=10) have unitary K; operations 10..=15 factor as
//! K = U_pre * P * U_post with P = |0><0|, so applying them to a state loses
//! norm. The lost norm |<0|U_post psi>|^2 is exactly the weight a Monte Carlo
//! trajectory must carry after the projection.
//!
//! Multi-qubit operations are ordered tensor-lexicographically: the global
//! index is sum_i l_i * 16^(n-1-i) with the leftmost qubit most significant.

use num_complex::Complex64;

use super::matrix::{c64, kron, CMatrix, CVector};
use super::pauli::{identity2, sigma_x, sigma_y, sigma_z};
use crate::error::{Error, Result};

/// Squared-amplitude threshold below which a projected state is declared dead.
pub const DEAD_WEIGHT_TOL: f64 = 1e-24;

/// Norm tolerance on input states.
const STATE_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum BasisOpKind {
    Unitary,
    /// Kraus factorization K = u_pre * P * u_post with P the |0...0> projector
    /// on the qubits the projective factors act on.
    Projective { u_pre: CMatrix, u_post: CMatrix },
}

#[derive(Debug, Clone)]
pub struct BasisOp {
    /// 0-based index within the 16^n operation list.
    pub index: usize,
    pub label: String,
    /// Single Kraus operator of the map rho -> K rho K^dag.
    pub kraus: CMatrix,
    pub kind: BasisOpKind,
}

impl BasisOp {
    pub fn is_projective(&self) -> bool {
        matches!(self.kind, BasisOpKind::Projective { .. })
    }
}

fn r_x() -> CMatrix {
    (identity2() + sigma_x() * Complex64::i()) * c64(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

fn r_y() -> CMatrix {
    (identity2() + sigma_y() * Complex64::i()) * c64(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

fn r_z() -> CMatrix {
    (identity2() + sigma_z() * Complex64::i()) * c64(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

fn projector0() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(0., 0.)])
}

fn pow(m: &CMatrix, k: usize) -> CMatrix {
    let mut acc = CMatrix::identity(2, 2);
    for _ in 0..k {
        acc = &acc * m;
    }
    acc
}

/// The 16 single-qubit operations in table order (0-based index).
pub fn single_qubit_basis_ops() -> Vec<BasisOp> {
    let rx = r_x();
    let ry = r_y();
    let rz = r_z();
    let pi = projector0();
    let rx3 = pow(&rx, 3);
    let rz3 = pow(&rz, 3);
    let rx2 = pow(&rx, 2);
    let rz2 = pow(&rz, 2);
    let s2 = c64(std::f64::consts::FRAC_1_SQRT_2, 0.0);

    let unitary = |label: &str, k: CMatrix| (label.to_string(), k, None);
    let projective = |label: &str, pre: CMatrix, post: CMatrix| {
        (label.to_string(), &pre * &pi * &post, Some((pre, post)))
    };

    let table = vec![
        unitary("I", identity2()),
        unitary("X", sigma_x()),
        unitary("Y", sigma_y()),
        unitary("Z", sigma_z()),
        unitary("Rx", rx.clone()),
        unitary("Ry", ry),
        unitary("Rz", rz.clone()),
        unitary("Ryz", (sigma_y() + sigma_z()) * s2),
        unitary("Rzx", (sigma_z() + sigma_x()) * s2),
        unitary("Rxy", (sigma_x() + sigma_y()) * s2),
        projective("Px", &rz3 * &rx3, &rx * &rz),
        projective("Py", rx.clone(), rx3.clone()),
        projective("Pz", identity2(), identity2()),
        projective("Pyx", &rz3 * &rx3, &rx3 * &rz),
        projective("Pxz", rx, &rx3 * &rz2),
        projective("Pxy", identity2(), rx2),
    ];

    table
        .into_iter()
        .enumerate()
        .map(|(index, (label, kraus, factors))| BasisOp {
            index,
            label,
            kraus,
            kind: match factors {
                None => BasisOpKind::Unitary,
                Some((u_pre, u_post)) => BasisOpKind::Projective { u_pre, u_post },
            },
        })
        .collect()
}

/// The full operation list for `n` qubits (16^n entries, tensor order).
pub fn basis_operations(n: usize) -> Result<Vec<BasisOp>> {
    if n == 0 || n > 2 {
        return Err(Error::QubitCount { n, max: 2 });
    }
    let singles = single_qubit_basis_ops();
    if n == 1 {
        return Ok(singles);
    }
    let count = 16usize.pow(n as u32);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut kraus = CMatrix::identity(1, 1);
        let mut u_pre = CMatrix::identity(1, 1);
        let mut u_post = CMatrix::identity(1, 1);
        let mut label = String::new();
        let mut projective = false;
        for q in 0..n {
            let l = (index / 16usize.pow((n - 1 - q) as u32)) % 16;
            let op = &singles[l];
            kraus = kron(&kraus, &op.kraus);
            if !label.is_empty() {
                label.push('.');
            }
            label.push_str(&op.label);
            match &op.kind {
                BasisOpKind::Unitary => {
                    u_pre = kron(&u_pre, &op.kraus);
                    u_post = kron(&u_post, &identity2());
                }
                BasisOpKind::Projective { u_pre: a, u_post: b } => {
                    projective = true;
                    u_pre = kron(&u_pre, a);
                    u_post = kron(&u_post, b);
                }
            }
        }
        let kind = if projective {
            BasisOpKind::Projective { u_pre, u_post }
        } else {
            BasisOpKind::Unitary
        };
        out.push(BasisOp {
            index,
            label,
            kraus,
            kind,
        });
    }
    Ok(out)
}

/// Result of applying a basis operation to a normalized state.
#[derive(Debug, Clone)]
pub struct BasisAction {
    pub state: CVector,
    pub weight: f64,
    pub dead: bool,
}

/// Apply a basis operation to a normalized state vector.
///
/// Unitary operations return (K psi, 1). Projective operations return the
/// renormalized projected state together with the squared norm of the
/// pre-normalization state; a vanishing projection yields weight 0 and a
/// dead flag.
pub fn apply_basis_op(op: &BasisOp, psi: &CVector) -> Result<BasisAction> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::StateNotNormalized { norm });
    }
    let out = &op.kraus * psi;
    match op.kind {
        BasisOpKind::Unitary => Ok(BasisAction {
            state: out,
            weight: 1.0,
            dead: false,
        }),
        BasisOpKind::Projective { .. } => {
            let weight = out.norm_squared();
            if weight < DEAD_WEIGHT_TOL {
                Ok(BasisAction {
                    state: CVector::zeros(psi.len()),
                    weight: 0.0,
                    dead: true,
                })
            } else {
                Ok(BasisAction {
                    state: out / c64(weight.sqrt(), 0.0),
                    weight,
                    dead: false,
                })
            }
        }
    }
}

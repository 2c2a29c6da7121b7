//! Dense complex linear algebra for n-qubit systems: Pauli bases,
//! superoperator transfer matrices, and the recovery-operation basis.

pub mod basis;
pub mod matrix;
pub mod pauli;
pub mod ptm;

pub use basis::{apply_basis_op, basis_operations, single_qubit_basis_ops, BasisAction, BasisOp, BasisOpKind};
pub use matrix::{CMatrix, CVector, HERM_TOL};
pub use pauli::PauliBasis;
pub use ptm::{superop_pauli_matrix, Ptm};

//! Classical toolkit for quasi-probability cancellation of non-Markovian noise
//! on small qubit systems.
//!
//! The library is organized around the pipeline used by the Monte Carlo
//! mitigation engine:
//!
//! * [`operators`] — dense complex linear algebra, Pauli bases, Pauli transfer
//!   matrices and the 16-element recovery-operation basis,
//! * [`bath`] — pole-expanded bath correlation functions and stationary
//!   colored-noise path generation,
//! * [`generator`] — the time-local noise generator built from the bath poles,
//! * [`pec`] — compilation of the per-step recovery map into quasi-probabilities,
//! * [`reference`] — deterministic oracles (ideal/noisy propagation, perturbative
//!   state, exact enumeration of the mitigated estimator),
//! * [`nmsse`] — stochastic unraveling of the noisy channel with a memory integral,
//! * [`qem`] — the trajectory-level Monte Carlo engine, estimators and bound
//!   calculators.
//!
//! All simulation entry points are deterministic functions of their inputs,
//! including the master seed; results do not depend on the number of worker
//! threads.

pub mod bath;
pub mod error;
pub mod generator;
pub mod nmsse;
pub mod operators;
pub mod pec;
pub mod qem;
pub mod reference;

pub use error::{Error, Result};

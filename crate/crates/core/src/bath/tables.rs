//! Packaged pole table for the cubic spectral density with exponential
//! cutoff, J(w) = w^3 / w_c^2 * exp(-w / w_c), with the correlation function
//! normalized as C(t) = (1/pi) integral_0^inf J(w) exp(-i w t) dw.
//!
//! The integral has the closed form C(t) = 6 w_c^2 / (pi (1 + i w_c t)^4),
//! which is approximated here by seven poles with positive amplitudes and
//! strictly decaying frequencies (max deviation ~8% of C(0), at t = 0, over
//! w_c t in [0, 10]). The fit was produced offline by constrained least
//! squares; amplitudes must stay positive so that the expansion is a valid
//! noise covariance.
//!
//! Everything scales analytically with the cutoff:
//! c_mu(w_c) = w_c^2 c_mu(1) and omega_mu(w_c) = w_c omega_mu(1).

use num_complex::Complex64;

use super::{BathSpec, Pole};
use crate::error::Result;

/// (amplitude |g|^2 * pi, Re omega, Im omega) at unit cutoff.
const CUBIC_EXP_FIT: [(f64, f64, f64); 7] = [
    (0.737640151545, -2.11738399842, 0.35),
    (0.802173229678, -2.67248610641, 0.35),
    (0.516885102376, -1.53487877052, 0.35),
    (0.773497510260, -3.23080263110, 0.369064923221),
    (1.146031654290, -3.88005492260, 0.531293356615),
    (1.351355083420, -4.78760380204, 0.765858449377),
    (1.171898848810, -6.17016478671, 1.17907250986),
];

/// Pole expansion (|g_mu|, omega_mu) of the cutoff-w_c correlation function.
pub fn cubic_exponential_poles(omega_c: f64) -> Vec<(Complex64, Complex64)> {
    CUBIC_EXP_FIT
        .iter()
        .map(|&(c, re, im)| {
            (
                Complex64::new(
                    (c * omega_c * omega_c * std::f64::consts::FRAC_1_PI).sqrt(),
                    0.0,
                ),
                Complex64::new(re * omega_c, im * omega_c),
            )
        })
        .collect()
}

/// Single-channel bath for one qubit coupled to the cutoff-w_c environment.
pub fn cubic_exponential_bath(omega_c: f64) -> Result<BathSpec> {
    BathSpec::single_channel(&cubic_exponential_poles(omega_c))
}

/// Two-channel bath for two qubits, each seeing an independent copy of the
/// cutoff-w_c environment: every pole is duplicated with its amplitude on
/// one channel only, so cross-channel correlations vanish.
pub fn cubic_exponential_bath_two_qubit(omega_c: f64) -> Result<BathSpec> {
    let singles = cubic_exponential_poles(omega_c);
    let zero = Complex64::new(0.0, 0.0);
    let mut poles = Vec::with_capacity(2 * singles.len());
    for &(g, w) in &singles {
        poles.push(Pole {
            amplitudes: vec![g, zero],
            frequency: w,
        });
        poles.push(Pole {
            amplitudes: vec![zero, g],
            frequency: w,
        });
    }
    BathSpec::new(2, poles)
}

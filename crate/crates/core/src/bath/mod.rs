//! Bath correlation functions in pole-expanded form and the spectral
//! parameters that control bias and sampling-overhead bounds.
//!
//! A bath is a finite list of poles. Pole mu carries one complex amplitude
//! g[j] per coupling channel j and a complex frequency omega with
//! Im(omega) > 0, so that for t >= 0
//!
//! ```text
//! C[j][k](t) = sum_mu conj(g[j]) g[k] exp(i omega t)
//! ```
//!
//! and negative times follow from C[j][k](-t) = conj(C[k][j](t)).

pub mod noise;
pub mod tables;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::matrix::CMatrix;

pub use noise::{noise_paths, NoisePath, NoiseSampler, TimeGrid};

#[derive(Debug, Clone)]
pub struct Pole {
    /// Amplitude per coupling channel, length = channel count.
    pub amplitudes: Vec<Complex64>,
    /// Complex frequency with strictly positive imaginary part.
    pub frequency: Complex64,
}

#[derive(Debug, Clone)]
pub struct BathSpec {
    channels: usize,
    poles: Vec<Pole>,
}

/// Spectral diagnostics of a bath: the effective spectral parameter
/// `g_b1`, the amplitude scale `g_b2` and the slowest decay rate `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub g_b1: f64,
    pub g_b2: f64,
    pub theta: f64,
}

impl BathSpec {
    pub fn new(channels: usize, poles: Vec<Pole>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("bath must declare at least one channel".into()));
        }
        for (index, pole) in poles.iter().enumerate() {
            if pole.frequency.im <= 0.0 {
                return Err(Error::InvalidPole {
                    index,
                    reason: format!(
                        "non-decaying frequency (Im(omega) = {} <= 0)",
                        pole.frequency.im
                    ),
                });
            }
            if !pole.frequency.is_finite()
                || pole.amplitudes.iter().any(|g| !g.is_finite())
            {
                return Err(Error::InvalidPole {
                    index,
                    reason: "non-finite entry".into(),
                });
            }
            if pole.amplitudes.len() != channels {
                return Err(Error::InvalidPole {
                    index,
                    reason: format!(
                        "{} amplitudes for {} channels",
                        pole.amplitudes.len(),
                        channels
                    ),
                });
            }
        }
        Ok(Self { channels, poles })
    }

    /// Single-channel bath from (amplitude, frequency) pairs.
    pub fn single_channel(poles: &[(Complex64, Complex64)]) -> Result<Self> {
        Self::new(
            1,
            poles
                .iter()
                .map(|&(g, w)| Pole {
                    amplitudes: vec![g],
                    frequency: w,
                })
                .collect(),
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    /// Correlation matrix C(t) for any real t, J x J.
    pub fn bcf(&self, t: f64) -> CMatrix {
        let j = self.channels;
        if t < 0.0 {
            let pos = self.bcf(-t);
            return pos.transpose().map(|z| z.conj());
        }
        let mut out = CMatrix::zeros(j, j);
        for pole in &self.poles {
            let phase = (Complex64::i() * pole.frequency * t).exp();
            for a in 0..j {
                for b in 0..j {
                    out[(a, b)] += pole.amplitudes[a].conj() * pole.amplitudes[b] * phase;
                }
            }
        }
        out
    }

    /// Element-wise 1-norm of C(t).
    pub fn bcf_one_norm(&self, t: f64) -> f64 {
        self.bcf(t).iter().map(|z| z.norm()).sum()
    }

    pub fn env_params(&self) -> Result<EnvParams> {
        if self.poles.is_empty() {
            return Err(Error::EmptyPoleList);
        }
        let mut g_b1 = 0.0;
        let mut g_b2 = 0.0;
        let mut theta = f64::INFINITY;
        for pole in &self.poles {
            let s: f64 = pole.amplitudes.iter().map(|g| g.norm()).sum();
            g_b1 += 2.0 * s * s / pole.frequency.im;
            g_b2 += 0.5 * s * s;
            theta = theta.min(pole.frequency.im);
        }
        Ok(EnvParams { g_b1, g_b2, theta })
    }

}

//! Stationary colored Gaussian noise paths with covariance prescribed by the
//! bath correlation function, generated by circulant embedding.
//!
//! The process driving the unraveling is the zero-mean complex Gaussian
//! vector process eta_j(t) with
//!
//! ```text
//! E[eta_j(t) conj(eta_k(s))] = conj(C[j][k](t - s)),   E[eta_j eta_k] = 0.
//! ```
//!
//! The conjugate on the correlation matrix is what makes the ensemble average
//! of the unraveled trajectories reproduce the time-local master equation at
//! second order; the convention is exercised end-to-end by the acceptance
//! suite. Because the pole expansion factorizes the channel structure,
//! eta_j(t) = sum_mu g[j][mu] zeta_mu(t) with independent scalar processes
//! zeta_mu of unit covariance exp(-i conj(omega_mu) tau). Each zeta_mu is
//! drawn exactly on the grid by embedding its Toeplitz covariance in a
//! circulant matrix and sampling via FFT.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use super::BathSpec;
use crate::error::{Error, Result};

/// Embedded circulants longer than this indicate a pathological grid/bath
/// combination rather than a legitimate workload.
const MAX_EMBED: usize = 1 << 22;

/// Wrap-around covariance contamination target: exp(-theta (P - L) dt) <= 1e-8.
const WRAP_LOG: f64 = 18.420_680_743_952_367;

/// Relative eigenvalue negativity below which clipping is silent.
const CLIP_SILENT: f64 = 1e-10;

/// Relative eigenvalue negativity beyond which generation fails hard.
const CLIP_FAIL: f64 = 1e-6;

/// Uniform time grid t_k = k * dt, k = 0..len.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, len: usize) -> Self {
        assert!(dt > 0.0 && len > 0);
        Self { dt, len }
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.len - 1)
    }
}

/// One realization of the noise process, one complex sample per channel per
/// grid point.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub grid: TimeGrid,
    /// values[channel][k]
    pub values: Vec<Vec<Complex64>>,
}

impl NoisePath {
    pub fn value(&self, channel: usize, k: usize) -> Complex64 {
        self.values[channel][k]
    }
}

struct PoleSampler {
    amplitudes: Vec<Complex64>,
    sqrt_eigs: Vec<f64>,
    inv_fft: Arc<dyn Fft<f64>>,
    embed_len: usize,
}

/// Precomputed circulant-embedding state for one (bath, grid) pair.
pub struct NoiseSampler {
    grid: TimeGrid,
    channels: usize,
    poles: Vec<PoleSampler>,
    clip_warnings: usize,
}

impl NoiseSampler {
    pub fn new(bath: &BathSpec, grid: TimeGrid) -> Result<Self> {
        let mut planner = FftPlanner::new();
        let mut poles = Vec::with_capacity(bath.poles().len());
        let mut clip_warnings = 0;
        for pole in bath.poles() {
            let theta = pole.frequency.im;
            let l = grid.len;
            // Long enough that the circulant wrap-around of the covariance is
            // below 1e-8 relative to r(0) = 1.
            let min_len = (2 * l).max(l + (WRAP_LOG / (theta * grid.dt)).ceil() as usize);
            let embed_len = min_len.next_power_of_two();
            if embed_len > MAX_EMBED {
                return Err(Error::EmbeddingTooLong {
                    len: embed_len,
                    max: MAX_EMBED,
                });
            }
            // First column of the embedded circulant; conjugate-symmetric so
            // the eigenvalues are real.
            let r = |tau: f64| (-Complex64::i() * pole.frequency.conj() * tau).exp();
            let mut col = vec![Complex64::default(); embed_len];
            for (m, slot) in col.iter_mut().enumerate() {
                let tau = grid.dt * m.min(embed_len - m) as f64;
                *slot = if 2 * m < embed_len {
                    r(tau)
                } else if 2 * m == embed_len {
                    Complex64::new(r(tau).re, 0.0)
                } else {
                    r(tau).conj()
                };
            }
            let fwd = planner.plan_fft_forward(embed_len);
            fwd.process(&mut col);
            let max_eig = col.iter().map(|z| z.re).fold(0.0_f64, f64::max);
            let min_eig = col.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min_eig < -CLIP_FAIL * max_eig {
                return Err(Error::CovarianceNotPsd { min_eig, max_eig });
            }
            if min_eig < -CLIP_SILENT * max_eig {
                clip_warnings += 1;
            }
            let sqrt_eigs = col.iter().map(|z| z.re.max(0.0).sqrt()).collect();
            poles.push(PoleSampler {
                amplitudes: pole.amplitudes.clone(),
                sqrt_eigs,
                inv_fft: planner.plan_fft_inverse(embed_len),
                embed_len,
            });
        }
        Ok(Self {
            grid,
            channels: bath.channels(),
            poles,
            clip_warnings,
        })
    }

    /// Number of poles whose embedded covariance needed non-trivial
    /// eigenvalue clipping.
    pub fn clip_warnings(&self) -> usize {
        self.clip_warnings
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Draw one path. Consumes a deterministic amount of randomness from the
    /// stream, so distinct streams give independent paths and equal streams
    /// give bit-identical ones.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoisePath {
        let l = self.grid.len;
        let mut values = vec![vec![Complex64::default(); l]; self.channels];
        let mut buf: Vec<Complex64> = Vec::new();
        for pole in &self.poles {
            let p = pole.embed_len;
            buf.clear();
            buf.reserve(p);
            let scale = 1.0 / (p as f64).sqrt();
            for s in &pole.sqrt_eigs {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                // circular complex normal with E|w|^2 = 1
                buf.push(Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2 * s);
            }
            pole.inv_fft.process(&mut buf);
            for (j, g) in pole.amplitudes.iter().enumerate() {
                if g.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..l {
                    values[j][k] += g * buf[k] * scale;
                }
            }
        }
        NoisePath {
            grid: self.grid,
            values,
        }
    }
}

/// Generate `count` independent paths from per-path streams derived from the
/// master seed. Path i uses stream i, so any subset can be regenerated.
pub fn noise_paths(
    bath: &BathSpec,
    grid: TimeGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<NoisePath>> {
    use rand::SeedableRng;
    let sampler = NoiseSampler::new(bath, grid)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        out.push(sampler.sample(&mut rng));
    }
    Ok(out)
}

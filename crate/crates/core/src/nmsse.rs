//! Stochastic unraveling of the noisy channel: the linear non-Markovian
//! stochastic Schroedinger equation
//!
//! ```text
//! d psi/dt = -i H psi
//!            - lambda^2 int_0^t K(tau) psi(t - tau) d tau
//!            + lambda sum_j eta_j(t) S_j psi(t),
//! K(tau) = sum_{j,k} C[j][k](tau) S_j exp(-i H tau) S_k,
//! ```
//!
//! integrated on a uniform fine grid. The unitary part is advanced exactly by
//! the cached one-step propagator (integrating-factor form), and the memory
//! and noise terms are treated with a Heun predictor-corrector:
//!
//! ```text
//! pred       = U (psi_n + dt G(t_n, psi_n))
//! psi_{n+1}  = U psi_n + dt/2 (U G(t_n, psi_n) + G(t_{n+1}, pred))
//! ```
//!
//! where G collects the non-unitary terms. With lambda = 0 the step reduces
//! to the exact unitary propagator, so norm drift vanishes identically.
//!
//! The trajectory is linear (no per-trajectory normalization); the ensemble
//! average of psi psi^dag reproduces the reduced density operator at second
//! order in the coupling and is renormalized to unit trace only at the end.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::bath::{NoisePath, NoiseSampler, TimeGrid};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::operators::matrix::{c64, trace, CMatrix, CVector};
use crate::reference::DensityState;

/// Norm beyond which a trajectory is declared numerically blown up.
pub const BLOWUP_NORM: f64 = 10.0;

/// Memory-kernel contributions below exp(-ln(1e8)) of the t = 0 value are
/// dropped, truncating the history window.
const WINDOW_LOG: f64 = 18.420_680_743_952_367;

/// Shared, immutable per-run state for the stepper: the exact one-step
/// unitary, the kernel table on the fine grid, and the coupling operators.
pub struct NmsseContext {
    dim: usize,
    dt: f64,
    lambda: f64,
    u_step: CMatrix,
    kernel: Vec<CMatrix>,
    couplings: Vec<CMatrix>,
}

impl NmsseContext {
    pub fn new(gen: &Generator, dt_f: f64, n_steps: usize) -> Result<Self> {
        if dt_f <= 0.0 {
            return Err(Error::Config(format!("fine step dt_f = {dt_f}")));
        }
        let model = gen.model();
        let dim = model.dim();
        let u_step = gen.heis().u(dt_f);
        let window = if gen.bath().poles().is_empty() {
            0
        } else {
            let theta = gen.bath().env_params()?.theta;
            n_steps.min((WINDOW_LOG / (theta * dt_f)).ceil() as usize)
        };
        let mut kernel = Vec::with_capacity(window + 1);
        for i in 0..=window {
            let tau = i as f64 * dt_f;
            let c = gen.bath().bcf(tau);
            let u_tau = gen.heis().u(tau);
            let mut k = CMatrix::zeros(dim, dim);
            for (j, sj) in model.couplings().iter().enumerate() {
                for (kk, sk) in model.couplings().iter().enumerate() {
                    if c[(j, kk)].norm_sqr() == 0.0 {
                        continue;
                    }
                    k += sj * &u_tau * sk * c[(j, kk)];
                }
            }
            kernel.push(k);
        }
        Ok(Self {
            dim,
            dt: dt_f,
            lambda: model.lambda(),
            u_step,
            kernel,
            couplings: model.couplings().to_vec(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Truncation window in fine steps.
    pub fn window(&self) -> usize {
        self.kernel.len().saturating_sub(1)
    }

    /// Cached kernel value K(i * dt).
    pub fn kernel(&self, i: usize) -> &CMatrix {
        &self.kernel[i]
    }

    /// Non-unitary right-hand side at grid slot `slot`, where `psi` is the
    /// current state (the tau = 0 point of the memory integral) and `hist`
    /// supplies the strictly earlier states.
    fn non_unitary_rhs(
        &self,
        psi: &CVector,
        hist: &[CVector],
        slot: usize,
        noise: &NoisePath,
    ) -> CVector {
        let mut g = CVector::zeros(self.dim);
        if self.lambda == 0.0 {
            return g;
        }
        // memory integral by trapezoid over the truncated history
        let m = slot.min(self.window());
        if m > 0 {
            let lam2 = -self.lambda * self.lambda;
            for i in 0..=m {
                let w = if i == 0 || i == m {
                    0.5 * self.dt
                } else {
                    self.dt
                };
                let state = if i == 0 { psi } else { &hist[slot - i] };
                g.gemv(c64(lam2 * w, 0.0), &self.kernel[i], state, c64(1.0, 0.0));
            }
        }
        // driving noise
        let lam = c64(self.lambda, 0.0);
        for (j, s) in self.couplings.iter().enumerate() {
            let eta = noise.value(j, slot);
            if eta.norm_sqr() == 0.0 {
                continue;
            }
            g.gemv(lam * eta, s, psi, c64(1.0, 0.0));
        }
        g
    }

    /// Advance one fine step. `hist` holds the recorded states for slots
    /// 0..=slot and `psi` is the current state at `slot` (equal to the last
    /// history entry unless the caller keeps pre-operation history).
    pub fn step(&self, psi: &CVector, hist: &[CVector], noise: &NoisePath) -> Result<CVector> {
        let slot = hist.len() - 1;
        let g_n = self.non_unitary_rhs(psi, hist, slot, noise);
        let drifted = psi + &g_n * c64(self.dt, 0.0);
        let pred = &self.u_step * drifted;
        let g_pred = self.non_unitary_rhs(&pred, hist, slot + 1, noise);
        let half = c64(0.5 * self.dt, 0.0);
        let next = &self.u_step * (psi + &g_n * half) + g_pred * half;
        let norm = next.norm();
        if !(norm <= BLOWUP_NORM) {
            return Err(Error::TrajectoryBlowUp {
                norm,
                t: (slot + 1) as f64 * self.dt,
            });
        }
        Ok(next)
    }
}

/// One unraveled trajectory: the full state history (needed by the memory
/// integral) plus the noise realization driving it.
pub struct StochasticTrajectory {
    pub history: Vec<CVector>,
    pub psi: CVector,
    pub noise: NoisePath,
}

impl StochasticTrajectory {
    pub fn new(psi0: CVector, noise: NoisePath) -> Self {
        Self {
            history: vec![psi0.clone()],
            psi: psi0,
            noise,
        }
    }

    pub fn slot(&self) -> usize {
        self.history.len() - 1
    }

    /// Advance `steps` fine steps.
    pub fn evolve(&mut self, ctx: &NmsseContext, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let next = ctx.step(&self.psi, &self.history, &self.noise)?;
            self.history.push(next.clone());
            self.psi = next;
        }
        Ok(())
    }
}

/// Ensemble estimate of the reduced density operator.
pub struct EnsembleDensity {
    pub states: Vec<DensityState>,
    /// Per-entry standard error of the (unnormalized) ensemble average.
    pub entry_stderr: Vec<DMatrix<f64>>,
    pub aborted: usize,
    pub total: usize,
}

struct ChunkAcc {
    sums: Vec<CMatrix>,
    sq_sums: Vec<DMatrix<f64>>,
    aborted: usize,
}

/// Average psi psi^dag over `n_traj` independent trajectories, recording
/// every `record_every` fine steps. Trajectory i draws its noise and nothing
/// else from stream i of the master seed, so the result is independent of
/// how trajectories are distributed over worker threads.
pub fn ensemble_density(
    gen: &Generator,
    psi0: &CVector,
    t_total: f64,
    dt_f: f64,
    n_traj: usize,
    seed: u64,
    record_every: usize,
) -> Result<EnsembleDensity> {
    if n_traj == 0 {
        return Err(Error::Config("trajectory count must be positive".into()));
    }
    let steps = (t_total / dt_f).round() as usize;
    if steps == 0 || ((steps as f64 * dt_f) - t_total).abs() > 1e-9 * t_total.max(1.0) {
        return Err(Error::Config(format!(
            "total time {t_total} is not a multiple of the fine step {dt_f}"
        )));
    }
    let record_every = record_every.max(1);
    if steps % record_every != 0 {
        return Err(Error::Config(format!(
            "record stride {record_every} does not divide {steps} fine steps"
        )));
    }
    let ctx = NmsseContext::new(gen, dt_f, steps)?;
    let grid = TimeGrid::new(dt_f, steps + 1);
    let sampler = NoiseSampler::new(gen.bath(), grid)?;
    let n_records = steps / record_every + 1;
    let dim = gen.model().dim();

    let chunk = 256usize;
    let n_chunks = n_traj.div_ceil(chunk);
    let partials: Vec<ChunkAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(n_traj);
            let mut acc = ChunkAcc {
                sums: vec![CMatrix::zeros(dim, dim); n_records],
                sq_sums: vec![DMatrix::zeros(dim, dim); n_records],
                aborted: 0,
            };
            for index in lo..hi {
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                let noise = sampler.sample(&mut rng);
                let mut traj = StochasticTrajectory::new(psi0.clone(), noise);
                let mut ok = true;
                let mut snapshots: Vec<CMatrix> = Vec::with_capacity(n_records);
                snapshots.push(&traj.psi * traj.psi.adjoint());
                for _ in 0..steps / record_every {
                    if traj.evolve(&ctx, record_every).is_err() {
                        ok = false;
                        break;
                    }
                    snapshots.push(&traj.psi * traj.psi.adjoint());
                }
                if ok {
                    for (r, snap) in snapshots.iter().enumerate() {
                        acc.sums[r] += snap;
                        for a in 0..dim {
                            for b in 0..dim {
                                acc.sq_sums[r][(a, b)] += snap[(a, b)].norm_sqr();
                            }
                        }
                    }
                } else {
                    acc.aborted += 1;
                }
            }
            acc
        })
        .collect();

    let mut sums = vec![CMatrix::zeros(dim, dim); n_records];
    let mut sq_sums = vec![DMatrix::zeros(dim, dim); n_records];
    let mut aborted = 0;
    for p in partials {
        aborted += p.aborted;
        for r in 0..n_records {
            sums[r] += &p.sums[r];
            sq_sums[r] += &p.sq_sums[r];
        }
    }
    if aborted * 100 > n_traj {
        return Err(Error::TooManyAborted {
            aborted,
            total: n_traj,
        });
    }
    let used = n_traj - aborted;
    if used == 0 {
        return Err(Error::AllTrajectoriesDead);
    }
    let mut states = Vec::with_capacity(n_records);
    let mut entry_stderr = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let mean = &sums[r] / c64(used as f64, 0.0);
        let mut se = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let var = (sq_sums[r][(a, b)] / used as f64 - mean[(a, b)].norm_sqr()).max(0.0);
                se[(a, b)] = (var / used as f64).sqrt();
            }
        }
        let tr = trace(&mean);
        states.push(DensityState {
            t: (r * record_every) as f64 * dt_f,
            rho: mean / tr,
        });
        entry_stderr.push(se);
    }
    Ok(EnsembleDensity {
        states,
        entry_stderr,
        aborted,
        total: n_traj,
    })
}

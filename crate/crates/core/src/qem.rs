//! The trajectory-level Monte Carlo mitigation engine: interleaves unraveled
//! noisy evolution with sampled recovery operations, tracks the signed
//! coefficient, estimates observables, and evaluates the theoretical bounds.
//!
//! Per trajectory and per step k the engine
//!
//! 1. evolves the stochastic state over [k dt, (k+1) dt] with the full
//!    history feeding the memory integral,
//! 2. samples an operation index from the step's quasi-probability plan and
//!    applies its Kraus operator (renormalizing and folding the lost norm
//!    into the coefficient for projective operations),
//! 3. multiplies the running coefficient by gamma * sign,
//! 4. records coefficient * <psi|O|psi> for every observable.
//!
//! Determinism contract: trajectory i of the mitigated ensemble consumes
//! stream i of the master seed, the noisy baseline uses a disjoint stream
//! range, and reduction happens in fixed chunk order, so identical
//! configurations produce identical reports on any number of threads.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::bath::{BathSpec, NoiseSampler, TimeGrid};
use crate::error::{Error, Result};
use crate::generator::{Generator, SystemModel};
use crate::nmsse::{NmsseContext, StochasticTrajectory};
use crate::operators::basis::{BasisOp, BasisOpKind, DEAD_WEIGHT_TOL};
use crate::operators::matrix::{c64, check_hermitian, expectation, CMatrix, CVector, HERM_TOL};
use crate::pec::{compile_plans, gamma_cumulative, sample_index, BasisCoeffs, QuasiProbabilityPlan};

/// Stream index base for the noisy-baseline ensemble, keeping it disjoint
/// from the mitigated ensemble's streams.
const NOISY_STREAM_BASE: u64 = 1 << 40;

/// Documented constant in the overhead envelope exp(c * lambda^2 T G_b1).
pub const OVERHEAD_EXPONENT_CONSTANT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    NoisyOnly,
    Mitigated,
    Both,
}

/// Which state the memory integral sees at an operation boundary: the state
/// after the sampled operation (default) or the pre-operation state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    #[default]
    PostOp,
    PreOp,
}

#[derive(Debug, Clone)]
pub struct Observable {
    pub label: String,
    pub matrix: CMatrix,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: SystemModel,
    pub bath: BathSpec,
    pub t_total: f64,
    pub dt_step: f64,
    pub dt_fine: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub observables: Vec<Observable>,
    pub mode: RunMode,
    pub psi0: CVector,
    pub gamma_cap: f64,
    pub quad_substeps: usize,
    pub history_mode: HistoryMode,
}

impl RunConfig {
    /// Cross-field invariants; returns (master steps, fine steps per master step).
    pub fn validate(&self) -> Result<(usize, usize)> {
        let m = (self.t_total / self.dt_step).round();
        if m < 1.0 || (m * self.dt_step - self.t_total).abs() > 1e-9 * self.t_total.max(1.0) {
            return Err(Error::Config(format!(
                "total time {} is not an integer multiple of the step size {}",
                self.t_total, self.dt_step
            )));
        }
        let f = (self.dt_step / self.dt_fine).round();
        if f < 1.0 || (f * self.dt_fine - self.dt_step).abs() > 1e-9 * self.dt_step {
            return Err(Error::Config(format!(
                "fine step {} does not divide the step size {}",
                self.dt_fine, self.dt_step
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::Config("trajectory count must be positive".into()));
        }
        if self.observables.is_empty() {
            return Err(Error::Config("no observables requested".into()));
        }
        let dim = self.model.dim();
        for o in &self.observables {
            if o.matrix.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: o.matrix.nrows(),
                });
            }
            check_hermitian(&o.matrix, HERM_TOL)?;
        }
        if self.psi0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.psi0.len(),
            });
        }
        let norm = self.psi0.norm();
        if (norm - 1.0).abs() > HERM_TOL {
            return Err(Error::StateNotNormalized { norm });
        }
        if self.gamma_cap <= 1.0 {
            return Err(Error::Config(format!("gamma cap {}", self.gamma_cap)));
        }
        if self.quad_substeps == 0 {
            return Err(Error::Config("quad_substeps must be positive".into()));
        }
        Ok((m as usize, f as usize))
    }
}

/// Precomputed immutable state shared by all trajectories of a run.
pub struct EngineCore {
    pub nmsse: NmsseContext,
    pub sampler: NoiseSampler,
    pub ops: Vec<BasisOp>,
    pub observables: Vec<Observable>,
    pub psi0: CVector,
    pub m_steps: usize,
    pub fine_per_step: usize,
    pub history_mode: HistoryMode,
}

impl EngineCore {
    pub fn new(cfg: &RunConfig, gen: &Generator) -> Result<Self> {
        let (m_steps, fine_per_step) = cfg.validate()?;
        let total_fine = m_steps * fine_per_step;
        let nmsse = NmsseContext::new(gen, cfg.dt_fine, total_fine)?;
        let grid = TimeGrid::new(cfg.dt_fine, total_fine + 1);
        let sampler = NoiseSampler::new(gen.bath(), grid)?;
        let ops = crate::operators::basis::basis_operations(cfg.model.n())?;
        Ok(Self {
            nmsse,
            sampler,
            ops,
            observables: cfg.observables.clone(),
            psi0: cfg.psi0.clone(),
            m_steps,
            fine_per_step,
            history_mode: cfg.history_mode,
        })
    }
}

/// One Monte Carlo sample of the mitigated (or bare noisy) circuit.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    /// values[obs][k] = coefficient(k) * <psi(k dt)|O|psi(k dt)>, k = 0..=M.
    pub values: Vec<Vec<f64>>,
    /// Running coefficient after each step (index 0 is 1 before any step).
    pub coefficients: Vec<f64>,
    /// Sampled operation index per step (empty for the noisy baseline).
    pub sampled: Vec<usize>,
    /// Step index at which a projection annihilated the state, if any.
    pub dead_at: Option<usize>,
}

/// Run one trajectory. With `plans = None` this is the bare noisy baseline.
pub fn run_trajectory<R: Rng + ?Sized>(
    core: &EngineCore,
    plans: Option<&[QuasiProbabilityPlan]>,
    rng: &mut R,
) -> Result<TrajectoryOutcome> {
    let n_obs = core.observables.len();
    let noise = core.sampler.sample(rng);
    let mut traj = StochasticTrajectory::new(core.psi0.clone(), noise);
    let mut coeff = 1.0_f64;
    let mut values = vec![vec![0.0; core.m_steps + 1]; n_obs];
    let mut coefficients = vec![0.0; core.m_steps + 1];
    let mut sampled = Vec::with_capacity(if plans.is_some() { core.m_steps } else { 0 });
    let mut dead_at = None;
    coefficients[0] = coeff;
    for (o, obs) in core.observables.iter().enumerate() {
        values[o][0] = expectation(&obs.matrix, &traj.psi);
    }
    for k in 0..core.m_steps {
        traj.evolve(&core.nmsse, core.fine_per_step)?;
        if let Some(plans) = plans {
            let plan = &plans[k];
            let l = sample_index(plan, rng);
            sampled.push(l);
            let op = &core.ops[l];
            let out = &op.kraus * &traj.psi;
            match op.kind {
                BasisOpKind::Unitary => {
                    traj.psi = out;
                }
                BasisOpKind::Projective { .. } => {
                    let w = out.norm_squared();
                    if w < DEAD_WEIGHT_TOL {
                        dead_at = Some(k);
                        coeff = 0.0;
                    } else {
                        coeff *= w;
                        traj.psi = out / c64(w.sqrt(), 0.0);
                    }
                }
            }
            coeff *= plan.gamma * plan.alpha[l];
            if dead_at.is_some() {
                break;
            }
            if core.history_mode == HistoryMode::PostOp {
                let slot = traj.history.len() - 1;
                traj.history[slot] = traj.psi.clone();
            }
        }
        coefficients[k + 1] = coeff;
        for (o, obs) in core.observables.iter().enumerate() {
            values[o][k + 1] = coeff * expectation(&obs.matrix, &traj.psi);
        }
    }
    Ok(TrajectoryOutcome {
        values,
        coefficients,
        sampled,
        dead_at,
    })
}

/// Per-observable Monte Carlo series.
#[derive(Debug, Clone)]
pub struct Series {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ObsReport {
    pub label: String,
    pub noisy: Option<Series>,
    pub mitigated: Option<Series>,
}

/// Theoretical bound values for a run configuration.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// One-step recovery defect bound at t = 0:
    /// dt^2 lambda^2 (|H| G_b1 + G_b2).
    pub one_step: f64,
    /// Multi-step bias bound:
    /// dt T lambda^2 |H| G_b1 + dt^2 lambda^2 G_b2 / (1 - exp(-theta dt)).
    pub multi_step_bias: f64,
    /// Overhead envelope exp(c lambda^2 T G_b1) with the documented constant c.
    pub gamma_envelope: f64,
    /// Compiled total normalization, when plans were built.
    pub gamma_tot: Option<f64>,
    /// Trajectories needed for (epsilon, delta) = (0.1, 0.05) using the
    /// compiled gamma_tot when available, the envelope otherwise.
    pub required_n: u64,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub times: Vec<f64>,
    pub observables: Vec<ObsReport>,
    /// Cumulative normalization after each step (starts at 1), when compiled.
    pub gamma_cumulative: Option<Vec<f64>>,
    pub bounds: BoundReport,
    pub n_traj: usize,
    pub dead: usize,
    pub aborted_noisy: usize,
    pub aborted_mitigated: usize,
}

/// Smallest trajectory count for which the concentration tail
/// 2 exp(-N eps^2 / gamma_tot) drops below delta.
pub fn required_samples(gamma_tot: f64, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && eps <= 1.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!(
            "accuracy parameters out of range: eps = {eps}, delta = {delta}"
        )));
    }
    Ok((gamma_tot * (2.0 / delta).ln() / (eps * eps)).ceil() as u64)
}

/// Evaluate the bound formulas for a configuration. `gamma_tot` is the
/// compiled normalization when plans exist.
pub fn bounds(cfg: &RunConfig, gamma_tot: Option<f64>) -> Result<BoundReport> {
    let lam2 = cfg.model.lambda_sq();
    let (g1, g2, theta) = if cfg.bath.poles().is_empty() {
        (0.0, 0.0, f64::INFINITY)
    } else {
        let p = cfg.bath.env_params()?;
        (p.g_b1, p.g_b2, p.theta)
    };
    let h_norm = crate::operators::matrix::spectral_norm_hermitian(cfg.model.hamiltonian());
    let dt = cfg.dt_step;
    let t = cfg.t_total;
    let one_step = dt * dt * lam2 * (h_norm * g1 + g2);
    let geom = 1.0 - (-theta * dt).exp();
    let multi_step_bias = dt * t * lam2 * h_norm * g1
        + if lam2 == 0.0 || g2 == 0.0 {
            0.0
        } else {
            dt * dt * lam2 * g2 / geom
        };
    let gamma_envelope = (OVERHEAD_EXPONENT_CONSTANT * lam2 * t * g1).min(700.0).exp();
    let required_n = required_samples(gamma_tot.unwrap_or(gamma_envelope), 0.1, 0.05)?;
    Ok(BoundReport {
        one_step,
        multi_step_bias,
        gamma_envelope,
        gamma_tot,
        required_n,
    })
}

struct EnsembleStats {
    sums: Vec<Vec<f64>>,
    sq_sums: Vec<Vec<f64>>,
    dead: usize,
    aborted: usize,
    used: usize,
}

fn run_ensemble(
    core: &EngineCore,
    plans: Option<&[QuasiProbabilityPlan]>,
    n_traj: usize,
    seed: u64,
    stream_base: u64,
) -> Result<EnsembleStats> {
    let n_obs = core.observables.len();
    let n_pts = core.m_steps + 1;
    let chunk = 64usize;
    let n_chunks = n_traj.div_ceil(chunk);
    let partials: Vec<EnsembleStats> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(n_traj);
            let mut st = EnsembleStats {
                sums: vec![vec![0.0; n_pts]; n_obs],
                sq_sums: vec![vec![0.0; n_pts]; n_obs],
                dead: 0,
                aborted: 0,
                used: 0,
            };
            for index in lo..hi {
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + index as u64);
                match run_trajectory(core, plans, &mut rng) {
                    Ok(outcome) => {
                        st.used += 1;
                        if outcome.dead_at.is_some() {
                            st.dead += 1;
                        }
                        for o in 0..n_obs {
                            for k in 0..n_pts {
                                let v = outcome.values[o][k];
                                st.sums[o][k] += v;
                                st.sq_sums[o][k] += v * v;
                            }
                        }
                    }
                    Err(_) => st.aborted += 1,
                }
            }
            st
        })
        .collect();
    let mut total = EnsembleStats {
        sums: vec![vec![0.0; n_pts]; n_obs],
        sq_sums: vec![vec![0.0; n_pts]; n_obs],
        dead: 0,
        aborted: 0,
        used: 0,
    };
    for p in partials {
        total.dead += p.dead;
        total.aborted += p.aborted;
        total.used += p.used;
        for o in 0..n_obs {
            for k in 0..n_pts {
                total.sums[o][k] += p.sums[o][k];
                total.sq_sums[o][k] += p.sq_sums[o][k];
            }
        }
    }
    if total.aborted * 100 > n_traj {
        return Err(Error::TooManyAborted {
            aborted: total.aborted,
            total: n_traj,
        });
    }
    if total.used == 0 {
        return Err(Error::AllTrajectoriesDead);
    }
    Ok(total)
}

fn stats_to_series(st: &EnsembleStats, n_obs: usize) -> Vec<Series> {
    let n = st.used as f64;
    (0..n_obs)
        .map(|o| {
            let mean: Vec<f64> = st.sums[o].iter().map(|s| s / n).collect();
            let stderr: Vec<f64> = st.sq_sums[o]
                .iter()
                .zip(&mean)
                .map(|(sq, m)| ((sq / n - m * m).max(0.0) / n).sqrt())
                .collect();
            Series { mean, stderr }
        })
        .collect()
}

/// Full Monte Carlo estimate for a run configuration.
pub fn estimate(cfg: &RunConfig) -> Result<EstimateReport> {
    let (m_steps, _) = cfg.validate()?;
    let gen = Generator::new(cfg.model.clone(), cfg.bath.clone())?;
    let core = EngineCore::new(cfg, &gen)?;
    let want_mitigated = matches!(cfg.mode, RunMode::Mitigated | RunMode::Both);
    let want_noisy = matches!(cfg.mode, RunMode::NoisyOnly | RunMode::Both);
    let plans = if want_mitigated {
        let coeffs = BasisCoeffs::new(cfg.model.n())?;
        Some(compile_plans(
            &gen,
            &coeffs,
            m_steps,
            cfg.dt_step,
            cfg.quad_substeps,
            cfg.gamma_cap,
        )?)
    } else {
        None
    };
    let times: Vec<f64> = (0..=m_steps).map(|k| k as f64 * cfg.dt_step).collect();
    let gamma_cum = plans.as_deref().map(gamma_cumulative);
    let gamma_tot = gamma_cum.as_ref().map(|g| *g.last().unwrap());
    let bound_report = bounds(cfg, gamma_tot)?;

    let mitigated_stats = if want_mitigated {
        Some(run_ensemble(
            &core,
            plans.as_deref(),
            cfg.n_traj,
            cfg.seed,
            0,
        )?)
    } else {
        None
    };
    let noisy_stats = if want_noisy {
        Some(run_ensemble(
            &core,
            None,
            cfg.n_traj,
            cfg.seed,
            NOISY_STREAM_BASE,
        )?)
    } else {
        None
    };

    let n_obs = cfg.observables.len();
    let mitigated_series = mitigated_stats.as_ref().map(|s| stats_to_series(s, n_obs));
    let noisy_series = noisy_stats.as_ref().map(|s| stats_to_series(s, n_obs));
    let observables = (0..n_obs)
        .map(|o| ObsReport {
            label: cfg.observables[o].label.clone(),
            noisy: noisy_series.as_ref().map(|s| s[o].clone()),
            mitigated: mitigated_series.as_ref().map(|s| s[o].clone()),
        })
        .collect();
    Ok(EstimateReport {
        times,
        observables,
        gamma_cumulative: gamma_cum,
        bounds: bound_report,
        n_traj: cfg.n_traj,
        dead: mitigated_stats.as_ref().map(|s| s.dead).unwrap_or(0),
        aborted_noisy: noisy_stats.as_ref().map(|s| s.aborted).unwrap_or(0),
        aborted_mitigated: mitigated_stats.as_ref().map(|s| s.aborted).unwrap_or(0),
    })
}

/// One row of the overhead sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub cutoff: f64,
    pub g_env: f64,
    pub times: Vec<f64>,
    pub gamma_tot: Vec<f64>,
}

/// Compile plans for each supplied bath table and report the growth of the
/// cumulative normalization, together with the effective spectral parameter.
pub fn sweep_gamma_tot(
    model: &SystemModel,
    tables: &[(f64, BathSpec)],
    t_total: f64,
    dt_step: f64,
    quad_substeps: usize,
    gamma_cap: f64,
) -> Result<Vec<SweepRow>> {
    let coeffs = BasisCoeffs::new(model.n())?;
    let m_steps = (t_total / dt_step).round() as usize;
    if m_steps == 0 || (m_steps as f64 * dt_step - t_total).abs() > 1e-9 * t_total.max(1.0) {
        return Err(Error::Config(format!(
            "total time {t_total} is not an integer multiple of the step size {dt_step}"
        )));
    }
    let mut rows = Vec::with_capacity(tables.len());
    for (cutoff, bath) in tables {
        let g_env = bath.env_params()?.g_b1;
        let gen = Generator::new(model.clone(), bath.clone())?;
        let plans = compile_plans(&gen, &coeffs, m_steps, dt_step, quad_substeps, gamma_cap)?;
        let gamma_tot = gamma_cumulative(&plans);
        let times = (0..=m_steps).map(|k| k as f64 * dt_step).collect();
        rows.push(SweepRow {
            cutoff: *cutoff,
            g_env,
            times,
            gamma_tot,
        });
    }
    Ok(rows)
}

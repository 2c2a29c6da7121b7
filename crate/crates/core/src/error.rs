use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("qubit count {n} outside supported range 1..={max}")]
    QubitCount { n: usize, max: usize },

    #[error("matrix is not Hermitian (max deviation {dev:.3e}, tolerance {tol:.3e})")]
    NotHermitian { dev: f64, tol: f64 },

    #[error("coupling operator {index} has spectral norm {norm} (expected 1 within {tol:.1e})")]
    CouplingNotNormalized { index: usize, norm: f64, tol: f64 },

    #[error("state vector is not normalized (norm {norm})")]
    StateNotNormalized { norm: f64 },

    #[error("pole {index}: {reason}")]
    InvalidPole { index: usize, reason: String },

    #[error("bath has an empty pole list")]
    EmptyPoleList,

    #[error("bath declares {bath} channels but the model has {model} coupling operators")]
    ChannelMismatch { model: usize, bath: usize },

    #[error(
        "discretized noise covariance is not positive semi-definite \
         (min eigenvalue {min_eig:.3e} of max {max_eig:.3e})"
    )]
    CovarianceNotPsd { min_eig: f64, max_eig: f64 },

    #[error("noise embedding length {len} exceeds the supported maximum {max}; \
             use a coarser grid or a faster-decaying bath")]
    EmbeddingTooLong { len: usize, max: usize },

    #[error("superoperator is not Hermiticity-preserving (imaginary residue {residue:.3e})")]
    NonRealPtm { residue: f64 },

    #[error("basis-operation system is singular; operation table is corrupted")]
    SingularBasisSystem,

    #[error(
        "step size too large for coupling: per-step normalization gamma = {gamma:.6} \
         exceeds cap {cap} at t = {t}"
    )]
    GammaCapExceeded { gamma: f64, cap: f64, t: f64 },

    #[error("trace drift {drift:.3e} exceeds 1e-6 at t = {t}; reduce the integrator step")]
    TraceDrift { drift: f64, t: f64 },

    #[error("trajectory norm {norm:.3e} exceeded blow-up guard at t = {t}")]
    TrajectoryBlowUp { norm: f64, t: f64 },

    #[error("{aborted} of {total} trajectories aborted (more than 1% of the ensemble)")]
    TooManyAborted { aborted: usize, total: usize },

    #[error("all trajectories are dead; no samples to average")]
    AllTrajectoriesDead,

    #[error("enumeration over {steps} steps with {branches} branches per step is too large")]
    EnumerationTooLarge { steps: usize, branches: usize },

    #[error("invalid run configuration: {0}")]
    Config(String),
}

//! Experiment configuration: TOML schema, validation with field-level
//! diagnostics, and conversion into the engine's run configuration.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use nmqem::bath::{BathSpec, Pole};
use nmqem::generator::SystemModel;
use nmqem::operators::matrix::{c64, CMatrix, CVector};
use nmqem::qem::{HistoryMode, Observable, RunConfig, RunMode};

use crate::pauli_expr::parse_pauli_expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub bath: BathBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub qubits: usize,
    /// Pauli expression, e.g. "-4 Z" or "ZI + IZ".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    /// Dense escape hatch: row-major complex entries as [re, im] pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian_dense: Option<Vec<Vec<[f64; 2]>>>,
    /// One Pauli expression per coupling channel; each must be Hermitian
    /// with unit spectral norm.
    pub couplings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    pub poles: Vec<PoleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleEntry {
    /// One complex amplitude [re, im] per coupling channel.
    pub g: Vec<[f64; 2]>,
    /// Complex frequency [re, im]; the imaginary part must be positive.
    pub omega: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub total_time: f64,
    pub step: f64,
    /// Fine integration step; defaults to step / 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_step: Option<f64>,
    pub trajectories: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub observables: Vec<ObservableEntry>,
    /// State-vector amplitudes as [re, im] pairs; defaults to the packaged
    /// reference superposition on every qubit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_substeps: Option<usize>,
}

fn default_mode() -> String {
    "both".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableEntry {
    Expr(String),
    Named { name: String, expr: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub total_time: f64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cap: Option<f64>,
    #[serde(default)]
    pub tables: Vec<SweepTableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTableEntry {
    pub cutoff: f64,
    pub poles: Vec<PoleEntry>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn model(&self) -> Result<SystemModel> {
        let n = self.model.qubits;
        if n == 0 || n > 2 {
            bail!("model.qubits: {n} outside the supported range 1..=2");
        }
        let dim = 1usize << n;
        let h = match (&self.model.hamiltonian, &self.model.hamiltonian_dense) {
            (Some(expr), None) => parse_pauli_expr(expr, n)
                .map_err(|e| anyhow!("model.hamiltonian: {e}"))?,
            (None, Some(rows)) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    bail!("model.hamiltonian_dense: expected a {dim}x{dim} matrix");
                }
                CMatrix::from_fn(dim, dim, |i, j| c64(rows[i][j][0], rows[i][j][1]))
            }
            (Some(_), Some(_)) => {
                bail!("model: give either hamiltonian or hamiltonian_dense, not both")
            }
            (None, None) => bail!("model: missing hamiltonian"),
        };
        let couplings = self
            .model
            .couplings
            .iter()
            .enumerate()
            .map(|(i, expr)| {
                parse_pauli_expr(expr, n).map_err(|e| anyhow!("model.couplings[{i}]: {e}"))
            })
            .collect::<Result<Vec<_>>>()?;
        let lambda = match (self.model.lambda, self.model.lambda_sq) {
            (Some(l), None) => l,
            (None, Some(l2)) => {
                if l2 < 0.0 {
                    bail!("model.lambda_sq: negative value {l2}");
                }
                l2.sqrt()
            }
            (Some(_), Some(_)) => bail!("model: give either lambda or lambda_sq, not both"),
            (None, None) => bail!("model: missing lambda or lambda_sq"),
        };
        SystemModel::new(n, h, couplings, lambda).map_err(|e| anyhow!("model: {e}"))
    }

    pub fn bath(&self) -> Result<BathSpec> {
        poles_to_bath(&self.bath.poles, self.model.couplings.len()).map_err(|e| anyhow!("bath.{e}"))
    }

    pub fn initial_state(&self, n: usize) -> Result<CVector> {
        let dim = 1usize << n;
        match &self.run.initial_state {
            Some(amps) => {
                if amps.len() != dim {
                    bail!(
                        "run.initial_state: {} amplitudes for dimension {dim}",
                        amps.len()
                    );
                }
                Ok(CVector::from_iterator(
                    dim,
                    amps.iter().map(|a| c64(a[0], a[1])),
                ))
            }
            None => Ok(default_state(n)),
        }
    }

    pub fn observables(&self, n: usize) -> Result<Vec<Observable>> {
        self.run
            .observables
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let (name, expr) = match entry {
                    ObservableEntry::Expr(e) => (sanitize_name(e, i), e.clone()),
                    ObservableEntry::Named { name, expr } => (sanitize_name(name, i), expr.clone()),
                };
                let matrix = parse_pauli_expr(&expr, n)
                    .map_err(|e| anyhow!("run.observables[{i}]: {e}"))?;
                Ok(Observable {
                    label: name,
                    matrix,
                })
            })
            .collect()
    }

    pub fn mode(&self) -> Result<RunMode> {
        match self.run.mode.as_str() {
            "noisy-only" => Ok(RunMode::NoisyOnly),
            "mitigated" => Ok(RunMode::Mitigated),
            "both" => Ok(RunMode::Both),
            other => bail!("run.mode: unknown mode '{other}' (noisy-only | mitigated | both)"),
        }
    }

    /// Full conversion with cross-field validation.
    pub fn to_run_config(&self, seed_override: Option<u64>) -> Result<RunConfig> {
        let model = self.model()?;
        let bath = self.bath()?;
        if bath.channels() != model.couplings().len() {
            bail!(
                "bath.poles: {} amplitude channels for {} couplings",
                bath.channels(),
                model.couplings().len()
            );
        }
        let n = model.n();
        let cfg = RunConfig {
            psi0: self.initial_state(n)?,
            observables: self.observables(n)?,
            mode: self.mode()?,
            model,
            bath,
            t_total: self.run.total_time,
            dt_step: self.run.step,
            dt_fine: self.run.fine_step.unwrap_or(self.run.step / 4.0),
            n_traj: self.run.trajectories,
            seed: seed_override.unwrap_or(self.run.seed),
            gamma_cap: self.run.gamma_cap.unwrap_or(10.0),
            quad_substeps: self.run.quad_substeps.unwrap_or(8),
            history_mode: HistoryMode::PostOp,
        };
        cfg.validate().map_err(|e| anyhow!("run: {e}"))?;
        Ok(cfg)
    }

    pub fn sweep_tables(&self, channels: usize) -> Result<Vec<(f64, BathSpec)>> {
        let block = self
            .sweep
            .as_ref()
            .ok_or_else(|| anyhow!("config has no [sweep] block"))?;
        block
            .tables
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let bath = poles_to_bath(&t.poles, channels)
                    .map_err(|e| anyhow!("sweep.tables[{i}].{e}"))?;
                Ok((t.cutoff, bath))
            })
            .collect()
    }
}

fn poles_to_bath(entries: &[PoleEntry], channels: usize) -> Result<BathSpec> {
    let poles = entries
        .iter()
        .map(|p| Pole {
            amplitudes: p.g.iter().map(|g| c64(g[0], g[1])).collect(),
            frequency: c64(p.omega[0], p.omega[1]),
        })
        .collect();
    BathSpec::new(channels, poles).map_err(|e| anyhow!("{e}"))
}

/// Reference superposition used when no initial state is configured:
/// per qubit (sqrt(3)/2 e^{-i pi/4}, 1/2 e^{i pi/4}).
pub fn default_state(n: usize) -> CVector {
    let a = c64(0.0, -std::f64::consts::FRAC_PI_4).exp() * (3.0f64.sqrt() / 2.0);
    let b = c64(0.0, std::f64::consts::FRAC_PI_4).exp() * 0.5;
    let single = [a, b];
    let dim = 1usize << n;
    CVector::from_iterator(
        dim,
        (0..dim).map(|idx| {
            (0..n)
                .map(|q| single[(idx >> (n - 1 - q)) & 1])
                .product::<num_complex::Complex64>()
        }),
    )
}

fn sanitize_name(raw: &str, index: usize) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    let trimmed = cleaned.trim_matches('_');
    if trimmed.is_empty() {
        format!("obs{index}")
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[model]
qubits = 1
hamiltonian = "-1 Z"
couplings = ["X"]
lambda_sq = 0.01

[[bath.poles]]
g = [[1.0, 0.0]]
omega = [0.0, 1.0]

[run]
total_time = 1.0
step = 0.1
trajectories = 100
seed = 7
observables = ["X", "Y", "Z"]
"#;

    #[test]
    fn round_trip_is_fixed_point() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        let cfg2: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, cfg2);
        let text2 = cfg2.to_toml().unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn converts_to_run_config() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        let rc = cfg.to_run_config(None).unwrap();
        assert_eq!(rc.n_traj, 100);
        assert_eq!(rc.seed, 7);
        assert!((rc.dt_fine - 0.025).abs() < 1e-15);
        assert_eq!(rc.observables.len(), 3);
        let rc2 = cfg.to_run_config(Some(99)).unwrap();
        assert_eq!(rc2.seed, 99);
    }

    #[test]
    fn rejects_non_decaying_pole_with_field_pointer() {
        let bad = SAMPLE.replace("omega = [0.0, 1.0]", "omega = [0.0, -1.0]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        let err = cfg.to_run_config(None).unwrap_err().to_string();
        assert!(err.contains("bath.pole 0"), "{err}");
        assert!(err.contains("non-decaying frequency"), "{err}");
    }

    #[test]
    fn rejects_time_grid_mismatch_naming_both_values() {
        let bad = SAMPLE.replace("total_time = 1.0", "total_time = 1.05");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        let err = cfg.to_run_config(None).unwrap_err().to_string();
        assert!(err.contains("1.05") && err.contains("0.1"), "{err}");
    }

    #[test]
    fn default_state_is_normalized_product() {
        for n in 1..=2 {
            let s = default_state(n);
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
        let s2 = default_state(2);
        let s1 = default_state(1);
        assert!((s2[0] - s1[0] * s1[0]).norm() < 1e-15);
        assert!((s2[3] - s1[1] * s1[1]).norm() < 1e-15);
    }

    #[test]
    fn named_observables_and_sanitization() {
        let cfg_text = SAMPLE.replace(
            r#"observables = ["X", "Y", "Z"]"#,
            r#"observables = [{ name = "Ox", expr = "X" }, "0.5 X + 0.5 Y"]"#,
        );
        let cfg: ExperimentConfig = toml::from_str(&cfg_text).unwrap();
        let obs = cfg.observables(1).unwrap();
        assert_eq!(obs[0].label, "Ox");
        assert_eq!(obs[1].label, "0_5_X___0_5_Y");
    }
}

//! Result emission: per-observable CSV files, bound and sweep tables, and
//! the run manifest. CSV output is byte-stable for identical configurations;
//! the manifest additionally records wall time and environment facts.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use nmqem::qem::{BoundReport, EstimateReport, RunConfig, SweepRow};
use nmqem::reference::propagate_ideal;

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// One CSV per observable with the fixed column order
/// t, ideal, noisy_mean, noisy_stderr, mitigated_mean, mitigated_stderr, gamma_tot.
pub fn write_observable_csvs(
    dir: &Path,
    cfg: &RunConfig,
    report: &EstimateReport,
) -> Result<Vec<PathBuf>> {
    let rho0 = &cfg.psi0 * cfg.psi0.adjoint();
    let mut written = Vec::new();
    for (o, obs) in cfg.observables.iter().enumerate() {
        let path = dir.join(format!("obs_{}.csv", obs.label));
        let mut out = String::new();
        out.push_str("t,ideal,noisy_mean,noisy_stderr,mitigated_mean,mitigated_stderr,gamma_tot\n");
        let rep = &report.observables[o];
        for (k, &t) in report.times.iter().enumerate() {
            let ideal = propagate_ideal(cfg.model.hamiltonian(), &rho0, t);
            let ideal_val =
                nmqem::operators::matrix::trace_prod(&obs.matrix, &ideal.rho).re;
            let row = [
                format!("{t:.6}"),
                fmt(ideal_val),
                fmt_opt(rep.noisy.as_ref().map(|s| s.mean[k])),
                fmt_opt(rep.noisy.as_ref().map(|s| s.stderr[k])),
                fmt_opt(rep.mitigated.as_ref().map(|s| s.mean[k])),
                fmt_opt(rep.mitigated.as_ref().map(|s| s.stderr[k])),
                fmt_opt(report.gamma_cumulative.as_ref().map(|g| g[k])),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_bounds_csv(dir: &Path, bounds: &BoundReport) -> Result<PathBuf> {
    let path = dir.join("bounds.csv");
    let mut out = String::from("quantity,value\n");
    out.push_str(&format!("one_step,{}\n", fmt(bounds.one_step)));
    out.push_str(&format!("multi_step_bias,{}\n", fmt(bounds.multi_step_bias)));
    out.push_str(&format!("gamma_envelope,{}\n", fmt(bounds.gamma_envelope)));
    out.push_str(&format!("gamma_tot,{}\n", fmt_opt(bounds.gamma_tot)));
    out.push_str(&format!("required_n,{}\n", bounds.required_n));
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_sweep_csv(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf> {
    let path = dir.join("sweep.csv");
    let mut out = String::from("omega_c,g_env,t,gamma_tot\n");
    for row in rows {
        for (t, g) in row.times.iter().zip(&row.gamma_tot) {
            out.push_str(&format!(
                "{},{},{t:.6},{}\n",
                fmt(row.cutoff),
                fmt(row.g_env),
                fmt(*g)
            ));
        }
    }
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Per-step quasi-probability table as {step, t, q[], gamma} records.
pub fn write_plans_json(
    dir: &Path,
    plans: &[nmqem::pec::QuasiProbabilityPlan],
) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct PlanRow<'a> {
        step: usize,
        t: f64,
        q: &'a [f64],
        gamma: f64,
    }
    let rows: Vec<PlanRow> = plans
        .iter()
        .enumerate()
        .map(|(step, p)| PlanRow {
            step,
            t: p.t,
            q: &p.q,
            gamma: p.gamma,
        })
        .collect();
    let path = dir.join("plans.json");
    let mut file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &rows)?;
    file.write_all(b"\n")?;
    Ok(path)
}

/// Deterministic master-equation trajectory as CSV with one column pair
/// (re, im) per density-matrix entry, row-major.
pub fn write_reference_csv(dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let gen = nmqem::generator::Generator::new(cfg.model.clone(), cfg.bath.clone())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let rho0 = &cfg.psi0 * cfg.psi0.adjoint();
    let dt_ode = cfg.dt_fine / 4.0;
    let states = nmqem::reference::propagate_noisy(&gen, &rho0, cfg.t_total, dt_ode)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let stride = ((cfg.dt_step / dt_ode).round() as usize).max(1);
    let dim = cfg.model.dim();
    let mut out = String::from("t");
    for i in 0..dim {
        for j in 0..dim {
            out.push_str(&format!(",re_{i}{j},im_{i}{j}"));
        }
    }
    out.push('\n');
    for state in states.iter().step_by(stride) {
        out.push_str(&format!("{:.6}", state.t));
        for i in 0..dim {
            for j in 0..dim {
                out.push_str(&format!(
                    ",{},{}",
                    fmt(state.rho[(i, j)].re),
                    fmt(state.rho[(i, j)].im)
                ));
            }
        }
        out.push('\n');
    }
    let path = dir.join("reference_qme.csv");
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    seed: u64,
    versions: Versions<'a>,
    threads: usize,
    wall_time_s: f64,
    trajectories: usize,
    dead_trajectories: usize,
    aborted_noisy: usize,
    aborted_mitigated: usize,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Versions<'a> {
    core: &'a str,
    cli: &'a str,
}

pub fn write_manifest(
    dir: &Path,
    config_bytes: &[u8],
    seed: u64,
    report: &EstimateReport,
    wall_time_s: f64,
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let digest = Sha256::digest(config_bytes);
    let config_hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = Manifest {
        config_hash,
        seed,
        versions: Versions {
            core: nmqem_version(),
            cli: env!("CARGO_PKG_VERSION"),
        },
        threads: rayon::current_num_threads(),
        wall_time_s,
        trajectories: report.n_traj,
        dead_trajectories: report.dead,
        aborted_noisy: report.aborted_noisy,
        aborted_mitigated: report.aborted_mitigated,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    let path = dir.join("manifest.json");
    let mut file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    file.write_all(b"\n")?;
    Ok(path)
}

fn nmqem_version() -> &'static str {
    // the library crate shares the workspace version
    env!("CARGO_PKG_VERSION")
}

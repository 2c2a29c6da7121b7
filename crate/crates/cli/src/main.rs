//! Batch interface: validate experiment configurations, run the Monte Carlo
//! mitigation engine, evaluate bound formulas, and sweep the sampling
//! overhead across bath families.

mod config;
mod output;
mod pauli_expr;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use nmqem::generator::Generator;
use nmqem::pec::{compile_plans, gamma_tot, BasisCoeffs};
use nmqem::qem::{bounds, estimate, sweep_gamma_tot};

#[derive(Parser)]
#[command(
    name = "nmqem",
    version,
    about = "Quasi-probability cancellation of non-Markovian noise: simulation and analysis runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and print a summary.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured experiment and emit CSV results plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all hardware threads).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (default: from the config, else the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the bound formulas for the configured run.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampling-overhead sweep over the configured per-cutoff pole tables.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => cmd_run(&config, seed, threads, out),
        Command::Bounds { config, out } => cmd_bounds(&config, out),
        Command::Sweep { config, out } => cmd_sweep(&config, out),
    }
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn cmd_validate(path: &PathBuf) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let rc = cfg.to_run_config(None)?;
    let env = rc.bath.env_params().map_err(|e| anyhow!("bath: {e}"))?;
    let m = (rc.t_total / rc.dt_step).round() as usize;
    println!("configuration OK: {}", path.display());
    println!("  qubits           : {}", rc.model.n());
    println!("  coupling lambda^2: {:.6}", rc.model.lambda_sq());
    println!("  bath poles       : {}", rc.bath.poles().len());
    println!("  G_env (G_b1)     : {:.6}", env.g_b1);
    println!("  theta            : {:.6}", env.theta);
    println!(
        "  steps M          : {m} x {} (fine step {})",
        rc.dt_step, rc.dt_fine
    );
    println!("  trajectories     : {}", rc.n_traj);
    Ok(())
}

fn cmd_run(
    path: &PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool already initialized")?;
    }
    let config_bytes = std::fs::read(path)?;
    let cfg = ExperimentConfig::load(path)?;
    let rc = cfg.to_run_config(seed)?;
    let dir = out_dir(&cfg, out)?;
    let start = Instant::now();
    let report = estimate(&rc).map_err(|e| anyhow!("run failed: {e}"))?;
    let wall = start.elapsed().as_secs_f64();
    let mut outputs = output::write_observable_csvs(&dir, &rc, &report)?;
    outputs.push(output::write_reference_csv(&dir, &rc)?);
    if !matches!(rc.mode, nmqem::qem::RunMode::NoisyOnly) {
        let gen = Generator::new(rc.model.clone(), rc.bath.clone())
            .map_err(|e| anyhow!("{e}"))?;
        let coeffs = BasisCoeffs::new(rc.model.n()).map_err(|e| anyhow!("{e}"))?;
        let m = (rc.t_total / rc.dt_step).round() as usize;
        let plans = compile_plans(&gen, &coeffs, m, rc.dt_step, rc.quad_substeps, rc.gamma_cap)
            .map_err(|e| anyhow!("{e}"))?;
        outputs.push(output::write_plans_json(&dir, &plans)?);
    }
    let manifest = output::write_manifest(&dir, &config_bytes, rc.seed, &report, wall, &outputs)?;
    outputs.push(manifest);
    if let Some(g) = report.gamma_cumulative.as_ref() {
        println!("gamma_tot = {:.6}", g.last().unwrap());
    }
    println!(
        "run complete in {wall:.1} s ({} trajectories, {} dead, {} aborted)",
        report.n_traj,
        report.dead,
        report.aborted_noisy + report.aborted_mitigated
    );
    for p in &outputs {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_bounds(path: &PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let rc = cfg.to_run_config(None)?;
    // compiled plans give the tighter overhead figure when they exist
    let gamma = (|| -> Result<f64> {
        let gen = Generator::new(rc.model.clone(), rc.bath.clone())?;
        let coeffs = BasisCoeffs::new(rc.model.n())?;
        let m = (rc.t_total / rc.dt_step).round() as usize;
        let plans = compile_plans(&gen, &coeffs, m, rc.dt_step, rc.quad_substeps, rc.gamma_cap)?;
        Ok(gamma_tot(&plans))
    })()
    .ok();
    let report = bounds(&rc, gamma).map_err(|e| anyhow!("bounds: {e}"))?;
    let dir = out_dir(&cfg, out)?;
    let p = output::write_bounds_csv(&dir, &report)?;
    println!("one_step         = {:.6e}", report.one_step);
    println!("multi_step_bias  = {:.6e}", report.multi_step_bias);
    println!("gamma_envelope   = {:.6e}", report.gamma_envelope);
    match report.gamma_tot {
        Some(g) => println!("gamma_tot        = {g:.6e}"),
        None => println!("gamma_tot        = (plans not compiled)"),
    }
    println!("required_n(0.1, 0.05) = {}", report.required_n);
    println!("wrote {}", p.display());
    Ok(())
}

fn cmd_sweep(path: &PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let model = cfg.model()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [sweep] block"))?;
    let tables = cfg.sweep_tables(model.couplings().len())?;
    let rows = sweep_gamma_tot(
        &model,
        &tables,
        sweep.total_time,
        sweep.step,
        cfg.run.quad_substeps.unwrap_or(8),
        sweep.gamma_cap.unwrap_or(f64::INFINITY),
    )
    .map_err(|e| anyhow!("sweep: {e}"))?;
    let dir = out_dir(&cfg, out)?;
    let p = output::write_sweep_csv(&dir, &rows)?;
    for row in &rows {
        println!(
            "omega_c {:.3}: G_env = {:.4}, terminal gamma_tot = {:.6}",
            row.cutoff,
            row.g_env,
            row.gamma_tot.last().unwrap()
        );
    }
    println!("wrote {}", p.display());
    Ok(())
}

//! Command-line front end of the electro-diffusion laboratory.
//!
//! Every subcommand reads one TOML configuration and writes its results
//! under the output directory (`--out` flag, `EDLAB_OUT_DIR` environment
//! variable, or the config's `out_dir`, in that order of precedence).
//!
//! Exit codes: 0 on success, 2 on solver failure, 3 on configuration
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use electrodiff::harness::config::ExperimentConfig;
use electrodiff::harness::output::{
    write_field_snapshot, write_functional_rows_csv, write_json, write_step_diagnostics_csv,
};
use electrodiff::harness::{run_comparison, run_mms, run_sweep, HarnessError, MmsStudy, MmsSystem};
use electrodiff::model::{validate_compatibility, well_prepared_initial};
use electrodiff::npns;
use electrodiff::quasineutral;

#[derive(Parser)]
#[command(
    name = "edlab",
    about = "Pseudospectral electro-diffusion laboratory: simulate the screened and quasineutral systems, compare them, and fit convergence rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides EDLAB_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the screened system at the first configured lambda.
    Simulate(RunArgs),
    /// Integrate the quasineutral limit system.
    Limit(RunArgs),
    /// Run one screened-vs-limit comparison at the first configured lambda.
    Compare(RunArgs),
    /// Run the full lambda sweep and fit convergence rates.
    Sweep(RunArgs),
    /// Verify both discretizations with manufactured solutions.
    Mms(RunArgs),
}

type CommandFn = fn(&ExperimentConfig, &Path) -> Result<(), HarnessError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&RunArgs, CommandFn) = match &cli.command {
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Limit(a) => (a, cmd_limit),
        Command::Compare(a) => (a, cmd_compare),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Mms(a) => (a, cmd_mms),
    };
    let cfg = match ExperimentConfig::from_path(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("edlab: {e}");
            return ExitCode::from(3);
        }
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os("EDLAB_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("edlab: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(2);
    }
    match run(&cfg, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let lambda = cfg.lambdas[0];
    let grid = cfg.build_grid()?;
    let doping = cfg.build_doping(&grid)?;
    let limit0 = cfg.build_limit_initial(&grid)?;
    let params = cfg.params(lambda)?;
    let initial = well_prepared_initial(&limit0, &doping, &params)?;
    let report = validate_compatibility(&initial, &doping);
    for entry in &report.entries {
        println!(
            "compatibility {}: residual {:e} ({})",
            entry.name,
            entry.residual,
            if entry.pass { "pass" } else { "FAIL" }
        );
    }
    let traj = npns::run(
        &initial,
        &doping,
        &params,
        &cfg.step_control(),
        &cfg.guards(),
        cfg.t_final,
        &cfg.snapshot_times(),
    )?;
    write_step_diagnostics_csv(&out.join("simulate_steps.csv"), &traj.steps)?;
    if cfg.write_fields {
        for snap in &traj.snapshots {
            let t = snap.state.t();
            let mut fields = vec![
                ("n", snap.state.n()),
                ("p", snap.state.p()),
                ("phi", &snap.phi),
            ];
            let names = ["vx", "vy", "vz"];
            for (axis, comp) in snap.state.v().components().iter().enumerate() {
                fields.push((names[axis], comp));
            }
            write_field_snapshot(&out.join(format!("fields_t{t:.6}.bin")), &grid, &fields)?;
        }
    }
    println!(
        "simulate: lambda = {lambda}, {} steps at dt = {:e}, results in {}",
        traj.steps.len() - 1,
        traj.dt,
        out.display()
    );
    Ok(())
}

fn cmd_limit(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let grid = cfg.build_grid()?;
    let doping = cfg.build_doping(&grid)?;
    let limit0 = cfg.build_limit_initial(&grid)?;
    let params = cfg.params(0.0)?;
    let traj = quasineutral::run_limit(
        &limit0,
        &doping,
        &params,
        &cfg.step_control(),
        &cfg.guards(),
        cfg.t_final,
        &cfg.snapshot_times(),
    )?;
    write_step_diagnostics_csv(&out.join("limit_steps.csv"), &traj.steps)?;
    if cfg.write_fields {
        for snap in &traj.snapshots {
            let t = snap.state.t();
            let mut fields = vec![
                ("z", snap.state.z()),
                ("n", &snap.n),
                ("p", &snap.p),
                ("phi", &snap.phi),
            ];
            let names = ["vx", "vy", "vz"];
            for (axis, comp) in snap.state.v().components().iter().enumerate() {
                fields.push((names[axis], comp));
            }
            write_field_snapshot(&out.join(format!("fields_t{t:.6}.bin")), &grid, &fields)?;
        }
    }
    println!(
        "limit: {} steps at dt = {:e}, results in {}",
        traj.steps.len() - 1,
        traj.dt,
        out.display()
    );
    Ok(())
}

fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let lambda = cfg.lambdas[0];
    let comparison = run_comparison(cfg, lambda)?;
    write_functional_rows_csv(&out.join("comparison_rows.csv"), &comparison.rows)?;
    write_step_diagnostics_csv(
        &out.join("comparison_npns_steps.csv"),
        &comparison.npns_steps,
    )?;
    write_step_diagnostics_csv(
        &out.join("comparison_limit_steps.csv"),
        &comparison.limit_steps,
    )?;
    println!(
        "compare: lambda = {lambda}, dt = {:e}, {} rows",
        comparison.dt,
        comparison.rows.len()
    );
    println!(
        "  regularity chain: {}",
        if comparison.regularity_ok {
            "pass"
        } else {
            "FAIL"
        }
    );
    if let Some((lo, hi)) = comparison.ratio_range {
        println!("  gamma / triple-norm ratio range: [{lo:.4}, {hi:.4}]");
    }
    println!(
        "  density transform identity residual: {:e}",
        comparison.max_transform_residual
    );
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let sweep = run_sweep(cfg)?;
    for (lambda, rows) in &sweep.per_lambda {
        write_functional_rows_csv(&out.join(format!("rows_lambda_{lambda}.csv")), rows)?;
    }
    write_json(&out.join("sweep_summary.json"), &sweep.summary)?;
    for row in &sweep.summary.sup_rows {
        println!(
            "lambda = {:<7} sup theorem_sum = {:e}  sup gamma = {:e}",
            row.lambda, row.sup_theorem_sum, row.sup_gamma
        );
    }
    println!(
        "theorem-norm fit: slope = {:.4}, r² = {:.6}",
        sweep.summary.theorem_fit.slope, sweep.summary.theorem_fit.r_squared
    );
    println!(
        "gamma fit:        slope = {:.4}, r² = {:.6}",
        sweep.summary.gamma_fit.slope, sweep.summary.gamma_fit.r_squared
    );
    Ok(())
}

fn cmd_mms(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let systems: Vec<MmsSystem> = match cfg.mms.systems.as_str() {
        "npns" => vec![MmsSystem::Npns],
        "limit" => vec![MmsSystem::Limit],
        _ => vec![MmsSystem::Npns, MmsSystem::Limit],
    };
    for system in systems {
        for study in [MmsStudy::Temporal, MmsStudy::Spatial] {
            let report = run_mms(cfg, system, study)?;
            let name = format!(
                "mms_{}_{}.json",
                match system {
                    MmsSystem::Npns => "npns",
                    MmsSystem::Limit => "limit",
                },
                match study {
                    MmsStudy::Temporal => "temporal",
                    MmsStudy::Spatial => "spatial",
                }
            );
            write_json(&out.join(&name), &report)?;
            println!("{name}:");
            for row in &report.rows {
                let extra = match study {
                    MmsStudy::Temporal => row
                        .observed_order
                        .map(|o| format!("order = {o:.3}"))
                        .unwrap_or_default(),
                    MmsStudy::Spatial => row
                        .drop_factor
                        .map(|d| format!("drop = {d:.1}x"))
                        .unwrap_or_default(),
                };
                println!(
                    "  n = {:<3} dt = {:<8e} max err = {:e} {extra}",
                    row.n, row.dt, row.error_max
                );
            }
        }
    }
    Ok(())
}

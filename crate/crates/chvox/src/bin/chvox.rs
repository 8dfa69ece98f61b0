//! Command-line front end: run a configured scenario, print a refinement
//! study, inspect a voxel mask, or report the derived quantities of a
//! configuration without running it.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when
//! the solver fails to converge (including frozen states), 4 for I/O
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chvox::grid::{build_grid, ExteriorSpec};
use chvox::scenarios::{
    build_domain, format_convergence_table, load_mask_auto, run_breakthrough, run_convergence,
    run_custom, run_droplet, run_spinodal, RunReport,
};
use chvox::{Error, ReferenceBasis, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "chvox", version, about = "Cahn-Hilliard dynamics on voxel domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario a config file describes and print its summary.
    Run {
        /// Config file ("key = value" lines; scenario key selects the driver).
        config: PathBuf,
    },
    /// Run the manufactured-solution refinement study and print the table.
    Convergence {
        /// Config file; its scenario key is ignored in favor of the study.
        config: PathBuf,
    },
    /// Load a voxel mask file and report its geometry.
    ValidateMask {
        /// Mask file, either text ("voxelmask N" header) or raw bytes.
        file: PathBuf,
    },
    /// Print the quantities a config implies without running anything.
    Info {
        /// Config file.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config } => cmd_run(&config),
        Command::Convergence { config } => cmd_convergence(&config),
        Command::ValidateMask { file } => cmd_validate_mask(&file),
        Command::Info { config } => cmd_info(&config),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let cfg = ScenarioConfig::parse(&text)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn cmd_run(path: &Path) -> Result<(), Error> {
    let cfg = load_config(path)?;
    match cfg.scenario {
        Scenario::Convergence => cmd_convergence(path),
        Scenario::Spinodal => {
            let report = run_spinodal(&cfg)?;
            print_run_summary(&report);
            Ok(())
        }
        Scenario::Custom => {
            let report = run_custom(&cfg)?;
            print_run_summary(&report);
            Ok(())
        }
        Scenario::Droplet => {
            let report = run_droplet(&cfg)?;
            print_run_summary(&report.run);
            println!("deviation to +1:  {:+.4e}", report.deviation_to_plus);
            println!("deviation to -1:  {:+.4e}", report.deviation_to_minus);
            println!("element means in: [{:.6}, {:.6}]", report.min_mean, report.max_mean);
            Ok(())
        }
        Scenario::Breakthrough => {
            let report = run_breakthrough(&cfg)?;
            print_run_summary(&report.run);
            println!("front slab index: {}", report.fronts.last().copied().unwrap_or(-1));
            println!("front monotone:   {}", report.front_monotone);
            println!("worst step mass balance residual: {:.3e}", report.max_balance_residual);
            Ok(())
        }
    }
}

fn print_run_summary(report: &RunReport) {
    let last = report.series.last().expect("series always holds the initial row");
    println!("steps:            {}", report.series.len() - 1);
    println!("final time:       {:.6}", report.final_time);
    println!("final mass:       {:.12e}", last.mass);
    println!("final energy:     {:.12e}", last.total_energy);
    println!("stationary:       {}", report.reached_stationary);
}

fn cmd_convergence(path: &Path) -> Result<(), Error> {
    let mut cfg = load_config(path)?;
    cfg.scenario = Scenario::Convergence;
    let rows = run_convergence(&cfg)?;
    print!("{}", format_convergence_table(&rows));
    Ok(())
}

fn cmd_validate_mask(path: &Path) -> Result<(), Error> {
    // Infer N for raw binary masks from the byte count.
    let bytes = std::fs::metadata(path)?.len();
    let n_hint = ((bytes as f64).cbrt().round() as usize).max(1);
    let (n, mask) = load_mask_auto(path, n_hint)?;
    let pore = mask.iter().filter(|&&b| b).count();
    let grid = build_grid(n, &mask, &ExteriorSpec::all_wall())?;
    let (_, components) = grid.connected_components();
    println!("edge length:      {n}");
    println!("pore voxels:      {pore} of {}", n * n * n);
    println!("porosity:         {:.4}", pore as f64 / (n * n * n) as f64);
    println!("components:       {components}");
    Ok(())
}

fn cmd_info(path: &Path) -> Result<(), Error> {
    let cfg = load_config(path)?;
    let grid = build_domain(&cfg)?;
    let basis = ReferenceBasis::new(cfg.p);
    let h = grid.h;
    println!("scenario:         {}", cfg.scenario.name());
    println!("h:                {:.6e}", h);
    println!("kappa / h^2:      {:.6e}", cfg.kappa / (h * h));
    println!("elements:         {}", grid.n_elements());
    println!("dof per field:    {}", grid.n_elements() * basis.n_loc);
    Ok(())
}

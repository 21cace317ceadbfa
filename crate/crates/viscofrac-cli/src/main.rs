//! Command-line front end for the viscofrac simulator.
//!
//! Exit codes: 0 on success, 2 when the solver fails to converge, 1 for
//! every other error (bad arguments, unreadable configs, I/O).

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use viscofrac::output::{mean_square_deviation, Normalization, TimeSeries};
use viscofrac::scenario::{
    compare_stress_modes, load_config, mesh_preset, parse_config_with_overrides, preset_text,
    run_scenario, RunResult, ScenarioConfig, ScenarioError, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "viscofrac",
    version,
    about = "Finite-element simulation of damage in fractional viscoelastic solids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML configuration file.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
    },
    /// Run one of the shipped preset scenarios.
    Preset {
        /// Preset name; use --list to see the options.
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        /// Override a configuration entry before the run, as a dotted
        /// key=value pair (repeatable), e.g. material.alpha=0.3.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// List the available presets and exit.
        #[arg(long)]
        list: bool,
    },
    /// Run a configuration twice, with the complete and the partial memory
    /// stress, and report the deviation between the probe stress series.
    CompareStress {
        /// Path to the configuration file.
        config: PathBuf,
    },
    /// Mean square deviation between one column of two CSV files, relative
    /// to the first file.
    Msd {
        csv_a: PathBuf,
        csv_b: PathBuf,
        /// Column name shared by both files.
        #[arg(long)]
        col: String,
    },
    /// Generate a named mesh and write it as a mesh text file.
    MeshGen {
        /// Mesh name: rod_1d, rod_2d, i_shaped, i_shaped_coarse, hdpe, or
        /// hdpe_coarse.
        preset: String,
        /// Output path.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn split_override(raw: &str) -> Result<(String, String), ScenarioError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(ScenarioError::Config(format!(
            "override '{raw}' is not of the form key=value"
        ))),
    }
}

fn print_run_summary(config: &ScenarioConfig, result: &RunResult) {
    let final_time = result
        .series
        .rows()
        .last()
        .map(|row| row[0])
        .unwrap_or(0.0);
    println!(
        "completed {} steps to t = {:.6e} s ({} time-step halvings)",
        result.steps, final_time, result.halvings
    );
    println!("peak damage {:.6e}", result.final_phi_max);
    if let Some(csv) = &config.output.csv {
        println!("wrote {csv}");
    }
    if let Some(prefix) = &config.output.vtk_prefix {
        println!("wrote field snapshots {prefix}_*.vtk");
    }
}

fn execute(command: Command) -> Result<(), ScenarioError> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let result = run_scenario(&cfg)?;
            print_run_summary(&cfg, &result);
        }
        Command::Preset {
            name,
            overrides,
            list,
        } => {
            if list {
                for preset in PRESET_NAMES {
                    println!("{preset}");
                }
                return Ok(());
            }
            let name = name.expect("clap requires a name unless --list is given");
            let text = preset_text(&name).ok_or_else(|| {
                ScenarioError::Config(format!(
                    "unknown preset '{name}' (available: {})",
                    PRESET_NAMES.join(", ")
                ))
            })?;
            let pairs = overrides
                .iter()
                .map(|raw| split_override(raw))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = parse_config_with_overrides(text, &pairs)?;
            let result = run_scenario(&cfg)?;
            print_run_summary(&cfg, &result);
        }
        Command::CompareStress { config } => {
            let cfg = load_config(&config)?;
            let cmp = compare_stress_modes(&cfg)?;
            println!("stress deviation (complete vs partial): {:.6e}", cmp.msd);
            println!(
                "final probe strain: {:.4}% engineering, {:.4}% Green-Lagrange",
                cmp.final_strain_eng_pct, cmp.final_strain_gl_pct
            );
        }
        Command::Msd { csv_a, csv_b, col } => {
            let a = TimeSeries::read_csv(&csv_a)?;
            let b = TimeSeries::read_csv(&csv_b)?;
            let msd =
                mean_square_deviation(&a.column(&col)?, &b.column(&col)?, Normalization::ByFirst)?;
            println!("{msd:.6e}");
        }
        Command::MeshGen { preset, output } => {
            let mesh = mesh_preset(&preset)?;
            std::fs::write(&output, mesh.to_text())?;
            println!(
                "wrote {} ({} nodes, {} elements)",
                output.display(),
                mesh.n_nodes(),
                mesh.n_elements()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage error and must exit 1 per the exit-code contract.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_nonconvergence() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

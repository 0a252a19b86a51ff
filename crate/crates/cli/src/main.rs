//! `transim` — synthetic-data generation, event-based transit simulation,
//! path-choice calibration, and benchmark comparison from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration/validation
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{names, ChoiceFlag};
use config::{ConfigFile, Overrides};
use transim_core::{Real, Result};

#[derive(Parser)]
#[command(name = "transim", version, about = "Transit simulation with self-calibrated path choice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,
    /// Random seed (demand, simulation streams, and optimizer).
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Output interval length in seconds.
    #[arg(long, value_name = "SECONDS", global = true)]
    tau: Option<Real>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (network, timetable, demand, ground-truth AFC).
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Custom network file (requires --profile).
        #[arg(long, value_name = "PATH")]
        network: Option<PathBuf>,
        /// Custom demand profile (requires --network).
        #[arg(long, value_name = "PATH")]
        profile: Option<PathBuf>,
    },
    /// Simulate demand on a network and write indicator tables.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory providing default input paths.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        network: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        timetable: Option<PathBuf>,
        /// Demand file (an AFC file works; tap-outs are ignored).
        #[arg(long, value_name = "PATH")]
        demand: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        metadata: Option<PathBuf>,
        /// Path-choice model to simulate.
        #[arg(long, value_enum, default_value = "uniform")]
        choice: ChoiceFlag,
        /// Coefficients file for --choice calibrated.
        #[arg(long, value_name = "PATH")]
        beta: Option<PathBuf>,
        /// Override every line capacity.
        #[arg(long, value_name = "N")]
        capacity: Option<u32>,
    },
    /// Estimate choice parameters from AFC data.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        network: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        timetable: Option<PathBuf>,
        /// Closed-system AFC file with tap-in and tap-out times.
        #[arg(long, value_name = "PATH")]
        afc: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        metadata: Option<PathBuf>,
        /// Objective-evaluation budget.
        #[arg(long, value_name = "N")]
        budget: Option<usize>,
        /// KL-term trade-off weight.
        #[arg(long, value_name = "R")]
        eta: Option<Real>,
        /// Minimum observed exit flow for a cell to enter the KL term.
        #[arg(long, value_name = "N")]
        qkl: Option<u32>,
    },
    /// Compare calibrated and benchmark models against ground-truth flows.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        network: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        timetable: Option<PathBuf>,
        /// Demand file driving all model runs.
        #[arg(long, value_name = "PATH")]
        demand: Option<PathBuf>,
        /// Ground-truth AFC file the models are compared against.
        #[arg(long = "truth-afc", value_name = "PATH")]
        truth_afc: Option<PathBuf>,
        /// Calibrated coefficients file.
        #[arg(long, value_name = "PATH")]
        beta: PathBuf,
        #[arg(long, value_name = "PATH")]
        metadata: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, network, profile } => {
            let file = load_config(&common.config)?;
            let overrides = Overrides {
                seed: common.seed,
                tau_s: common.tau,
                ..Overrides::default()
            };
            let resolved = config::resolve(&file, &overrides, None)?;
            commands::cmd_generate(
                &commands::GenerateInputs { out: common.out, network, profile },
                &resolved,
            )
        }
        Command::Simulate {
            common,
            data,
            network,
            timetable,
            demand,
            metadata,
            choice,
            beta,
            capacity,
        } => {
            let file = load_config(&common.config)?;
            let meta = commands::load_metadata_if_any(&metadata, &data)?;
            let overrides = Overrides {
                seed: common.seed,
                tau_s: common.tau,
                capacity,
                ..Overrides::default()
            };
            let resolved = config::resolve(&file, &overrides, meta.as_ref())?;
            let choice = commands::resolve_choice(choice, &beta, meta.as_ref())?;
            commands::cmd_simulate(
                &commands::SimulateInputs {
                    network: commands::input_path(&network, &data, names::NETWORK)?,
                    timetable: commands::input_path(&timetable, &data, names::TIMETABLE)?,
                    demand: commands::input_path(&demand, &data, names::DEMAND)?,
                    out: common.out,
                    choice,
                },
                &resolved,
            )
            .map(|_| ())
        }
        Command::Calibrate {
            common,
            data,
            network,
            timetable,
            afc,
            metadata,
            budget,
            eta,
            qkl,
        } => {
            let file = load_config(&common.config)?;
            let meta = commands::load_metadata_if_any(&metadata, &data)?;
            let overrides = Overrides {
                seed: common.seed,
                tau_s: common.tau,
                eta,
                q_kl: qkl,
                budget,
                ..Overrides::default()
            };
            let resolved = config::resolve(&file, &overrides, meta.as_ref())?;
            commands::cmd_calibrate(
                &commands::CalibrateInputs {
                    network: commands::input_path(&network, &data, names::NETWORK)?,
                    timetable: commands::input_path(&timetable, &data, names::TIMETABLE)?,
                    afc: commands::input_path(&afc, &data, names::AFC)?,
                    out: common.out,
                    metadata: meta,
                },
                &resolved,
            )
        }
        Command::Compare {
            common,
            data,
            network,
            timetable,
            demand,
            truth_afc,
            beta,
            metadata,
        } => {
            let file = load_config(&common.config)?;
            let meta = commands::load_metadata_if_any(&metadata, &data)?;
            let overrides = Overrides {
                seed: common.seed,
                tau_s: common.tau,
                ..Overrides::default()
            };
            let resolved = config::resolve(&file, &overrides, meta.as_ref())?;
            commands::cmd_compare(
                &commands::CompareInputs {
                    network: commands::input_path(&network, &data, names::NETWORK)?,
                    timetable: commands::input_path(&timetable, &data, names::TIMETABLE)?,
                    demand: commands::input_path(&demand, &data, names::DEMAND)?,
                    truth_afc: commands::input_path(&truth_afc, &data, names::AFC)?,
                    beta,
                    out: common.out,
                    metadata: meta,
                },
                &resolved,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

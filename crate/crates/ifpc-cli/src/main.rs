//! `ifpc` command-line interface.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime fault.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ifpc::harness::output::{write_ablation, write_simulation, Manifest};
use ifpc::harness::{load_scenario, run};
use ifpc::turbojet::maps::CharacteristicMaps;
use ifpc::Error;

#[derive(Parser)]
#[command(name = "ifpc", version, about = "Integrated flight/propulsion control simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and write the log, metrics and manifest.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full, no-thrust-comp and no-disturbance-comp variants.
    Ablate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the engine equilibrium at the scenario's initial condition.
    Trim {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the small-signal engine model at the scenario's trim.
    Linearize {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Map file utilities.
    Maps {
        #[command(subcommand)]
        command: MapsCommand,
    },
}

#[derive(Subcommand)]
enum MapsCommand {
    /// Parse and validate a map file.
    Check { file: PathBuf },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Simulate { scenario, out } => {
            let scn = load_scenario(&scenario)?;
            let m = write_simulation(&scn, Some(&scenario), &out)?;
            Ok(report(&m, &out))
        }
        Command::Ablate { scenario, out } => {
            let scn = load_scenario(&scenario)?;
            let m = write_ablation(&scn, Some(&scenario), &out)?;
            Ok(report(&m, &out))
        }
        Command::Trim { scenario } => {
            let scn = load_scenario(&scenario)?;
            let (af, eng, _) = run::trim_scenario(&scn)?;
            println!("n_0 = {} rpm", eng.n0);
            println!("W_f0 = {} kg/s", eng.w_f0);
            println!("T_0 = {} N", eng.t0);
            println!("alpha = {} rad", af.alpha);
            println!("delta_e = {} rad", af.delta_e);
            Ok(ExitCode::SUCCESS)
        }
        Command::Linearize { scenario } => {
            let scn = load_scenario(&scenario)?;
            let op = run::operating_point(&scn)?;
            let l = op.linear;
            println!("T_0 = {} N", l.t0);
            println!("n_0 = {} rpm", l.n0);
            println!("W_f0 = {} kg/s", l.w_f0);
            println!("a_n = {}", l.a_n);
            println!("b_n = {}", l.b_n);
            println!("c_n = {}", l.c_n);
            println!("d_n = {}", l.d_n);
            println!("validity_radius = {}", l.validity_radius);
            Ok(ExitCode::SUCCESS)
        }
        Command::Maps {
            command: MapsCommand::Check { file },
        } => {
            let maps = CharacteristicMaps::load(&file)?;
            maps.validate()?;
            print_map_summary(&file, &maps);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report(m: &Manifest, out: &Path) -> ExitCode {
    for v in &m.variants {
        let e: Vec<String> = v
            .metrics
            .axes
            .iter()
            .map(|a| format!("{}: rms {:.4} m, final {:.4} m", a.axis, a.rms, a.steady_state))
            .collect();
        println!(
            "{}: {}; thrust estimate error {:.3}%",
            v.name,
            e.join(", "),
            100.0 * v.metrics.final_thrust_estimate_error
        );
        if let Some(f) = &v.fault {
            eprintln!("{}: fault at t = {} s: {}", v.name, f.time, f.message);
        }
    }
    println!("manifest: {}", out.join("manifest.json").display());
    if m.has_fault() {
        ExitCode::from(EXIT_RUNTIME)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_map_summary(file: &Path, maps: &CharacteristicMaps) {
    println!("{}: ok", file.display());
    for (name, m) in [("compressor", &maps.compressor), ("turbine", &maps.turbine)] {
        let g = &m.first;
        println!(
            "  {name}: {} x {} grid, speed [{}, {}], position [{}, {}]",
            g.x.len(),
            g.y.len(),
            g.x[0],
            g.x[g.x.len() - 1],
            g.y[0],
            g.y[g.y.len() - 1]
        );
    }
}

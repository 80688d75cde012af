use std::path::PathBuf;
use std::process::ExitCode;

use chdbc_core::sim::{parse_config, run, Demo, RunSummary, SimConfig, SimError};
use chdbc_core::StepperKind;
use clap::{Parser, Subcommand};

/// Cahn–Hilliard simulations with dynamic boundary conditions.
#[derive(Parser)]
#[command(name = "chdbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a `key = value` file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the file's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in preset, optionally at reduced size.
    Demo {
        #[arg(value_parser = ["fig1", "fig2"])]
        which: String,
        /// Cells per direction.
        #[arg(long)]
        nx: Option<usize>,
        /// Number of time steps.
        #[arg(long)]
        steps: Option<usize>,
        /// mm, fi or cc.
        #[arg(long, value_parser = parse_stepper)]
        stepper: Option<StepperKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_stepper(s: &str) -> Result<StepperKind, String> {
    StepperKind::parse(s).ok_or_else(|| format!("unknown stepper `{s}` (expected mm, fi or cc)"))
}

fn config_for(command: Command) -> Result<SimConfig, SimError> {
    match command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|source| SimError::Io { path: config.clone(), source })?;
            let mut c = parse_config(&text)?;
            if let Some(dir) = out {
                c.output = dir;
            }
            Ok(c)
        }
        Command::Demo { which, nx, steps, stepper, out } => {
            let demo = Demo::parse(&which).expect("clap restricts the choices");
            let mut c = demo.config_with(nx, steps, stepper);
            if let Some(dir) = out {
                c.output = dir;
            }
            c.validate()?;
            Ok(c)
        }
    }
}

fn report(config: &SimConfig, s: &RunSummary) {
    println!("output            {}", config.output.display());
    println!("steps             {}", s.steps_taken);
    println!("final energy      {:e}", s.final_energy);
    println!("bulk mean drift   {:e}", s.max_bulk_mass_drift);
    println!("surf mean drift   {:e}", s.max_surf_mass_drift);
    println!("energy increases  {}", s.energy_violations);
    println!("ledger failures   {}", s.ledger_violations);
    match s.holder_quotient {
        Some(q) => println!("holder quotient   {q:e}"),
        None => println!("holder quotient   n/a"),
    }
    println!("boundary spread   {:e}", s.boundary_deviation);
    println!("|phi| > 0.9       {:.1}%", 100.0 * s.separated_fraction);
    println!("dissipation ½Σ    {:e}", s.half_dissipation);
    println!("dissipation Σ     {:e}", s.full_dissipation);
    println!("newton iterations {}", s.newton_iterations);
}

fn threads_from_env() -> Result<(), String> {
    let Ok(value) = std::env::var("CHDBC_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| format!("CHDBC_THREADS must be a positive integer, got `{value}`"))?;
    if n == 0 {
        return Err("CHDBC_THREADS must be at least 1".into());
    }
    chdbc_core::set_thread_limit(n)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let config = match config_for(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&config) {
        Ok(summary) => {
            report(&config, &summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

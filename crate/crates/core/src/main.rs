use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use primlow_core::harness::{check_config, fit_csv, run_sweep, write_outputs, RunConfig};
use primlow_core::Error;

/// Compressible primitive equations and their low-Mach limit.
#[derive(Parser)]
#[command(name = "primlow", version)]
struct Cli {
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured `params.delta` only.
    Run { config: PathBuf },
    /// Run every entry of `delta_sweep`.
    Sweep { config: PathBuf },
    /// Report admissibility of every sweep entry without running.
    Check { config: PathBuf },
    /// Fit the rate of `sup_t d` against delta from a functionals CSV.
    Fit { csv: PathBuf },
}

const EXIT_USAGE: u8 = 1;
const EXIT_INADMISSIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Inadmissible(_) | Error::InvalidParams(_) => EXIT_INADMISSIBLE,
        Error::Vacuum { .. }
        | Error::NoContraction { .. }
        | Error::BlowUp { .. }
        | Error::BoundaryViolation { .. } => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn sweep(cfg: RunConfig) -> Result<u8, Error> {
    let report = run_sweep(&cfg)?;
    write_outputs(&cfg, &report)?;
    for c in &report.cases {
        match &c.status {
            primlow_core::harness::CaseStatus::Ok => {
                println!(
                    "delta {:e}: {} steps, sup D = {:e}, sup A* = {:e}",
                    c.delta, c.steps, c.sup_d, c.sup_a_star
                )
            }
            primlow_core::harness::CaseStatus::Failed(m) => {
                println!("delta {:e}: failed: {m}", c.delta)
            }
        }
    }
    if let Some(f) = &report.d_fit {
        println!("sup D ~ delta^{:.4} (r2 = {:.5})", f.slope, f.r2);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(if report.any_solver_failure() {
        EXIT_SOLVER
    } else {
        0
    })
}

fn run(cli: Cli) -> Result<u8, Error> {
    if cli.print_config {
        print!("{}", RunConfig::default().to_toml_string());
        return Ok(0);
    }
    let Some(cmd) = cli.command else {
        eprintln!("no command given; see --help");
        return Ok(EXIT_USAGE);
    };
    match cmd {
        Command::Run { config } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.delta_sweep = vec![cfg.params.delta];
            sweep(cfg)
        }
        Command::Sweep { config } => sweep(RunConfig::load(&config)?),
        Command::Check { config } => {
            let cfg = RunConfig::load(&config)?;
            let mut code = 0;
            for (delta, res) in check_config(&cfg) {
                match res {
                    Ok(rep) => println!(
                        "delta {delta:e}: admissible ({})",
                        serde_json::to_string(&rep)?
                    ),
                    Err(e) => {
                        println!("delta {delta:e}: {e}");
                        code = code.max(exit_code(&e));
                    }
                }
            }
            Ok(code)
        }
        Command::Fit { csv } => {
            let fit = fit_csv(&csv)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

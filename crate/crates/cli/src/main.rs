use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cma_cli::commands::{cmd_cone, cmd_estimates, cmd_manufacture, cmd_solve, exit_code_for, Status};
use cma_cli::config::{FlagOverrides, RunConfig};
use cma_cli::verify::{format_table, run_battery, VerifyOptions};
use cma_core::DiffMode;

#[derive(Parser)]
#[command(name = "cma", version, about = "Complex Monge-Ampère type equations on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set problem.m=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "cma-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Points per real axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long, value_parser = parse_diff)]
    diff: Option<DiffMode>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let flags = FlagOverrides {
            seed: self.seed,
            grid: self.grid,
            alpha: self.alpha,
            diff: self.diff,
        };
        RunConfig::load(self.config.as_deref(), &self.sets, &flags)
    }
}

fn parse_diff(s: &str) -> Result<DiffMode, String> {
    s.parse().map_err(|e: cma_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Cone check, continuity solve, monitors and artifacts.
    Solve(Common),
    /// Certify the cone condition for the configured problem.
    ConeCheck(Common),
    /// Estimate monitors for a potential (default `u = 0`).
    Estimates {
        #[command(flatten)]
        common: Common,
        /// Snapshot of the potential to examine.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Write `ψ` and `u*` for a manufactured configuration.
    Manufacture(Common),
    /// Run the invariant battery and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the analytic gradient (mutation check for the battery itself).
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
}

fn run(cli: Cli) -> Result<u8> {
    cma_cli::init_threads()?;
    let status = match cli.command {
        Command::Solve(c) => {
            let report = cmd_solve(&c.load()?, &c.out)?;
            for v in &report.verdicts {
                println!(
                    "{} {:<20} value={:.3e} tol={:.3e}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.value,
                    v.tolerance
                );
            }
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            report.status
        }
        Command::ConeCheck(c) => {
            let r = cmd_cone(&c.load()?, &c.out)?;
            println!("cone holds: {} (min margin {:e})", r.cone.holds, r.cone.min_margin);
            r.status
        }
        Command::Estimates { common, field } => {
            let r = cmd_estimates(&common.load()?, field.as_deref(), &common.out)?;
            println!(
                "wMax {:e}  fittedC {:e}  fittedA {:e}  c0Osc {:e}",
                r.estimates.w_max, r.estimates.fitted_c, r.estimates.fitted_a, r.estimates.c0_osc
            );
            r.status
        }
        Command::Manufacture(c) => {
            let r = cmd_manufacture(&c.load()?, &c.out)?;
            println!("psi: {}\nu_star: {}", r.psi_path.display(), r.u_star_path.display());
            r.status
        }
        Command::Verify { seed, inject_sign_flip } => {
            let results = run_battery(&VerifyOptions {
                seed,
                flip_gradient_sign: inject_sign_flip,
                ..VerifyOptions::default()
            });
            print!("{}", format_table(&results));
            if results.iter().all(|r| r.pass) {
                Status::Success
            } else {
                Status::NumericalFailure
            }
        }
    };
    Ok(status.exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

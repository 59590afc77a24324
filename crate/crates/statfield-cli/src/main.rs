//! `statfield` — solve, analyse and simulate capital-allocation scenarios.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use commands::{AbmArgs, Common};
use output::Format;

#[derive(Parser)]
#[command(name = "statfield", version, about = "Statistical field model of capital allocation across sectors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory of an earlier `solve`; its scenario and capital are reused.
    #[arg(long, global = true)]
    from: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads for sweeps and ABM seeds.
    #[arg(long, global = true, env = "STATFIELD_THREADS")]
    threads: Option<usize>,
    /// Solver iteration cap.
    #[arg(long, global = true, default_value_t = 20_000)]
    max_iter: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the collective state.
    Solve,
    /// Stability denominators, map checks, sensitivities and patterns.
    Stability,
    /// Dynamic coefficients and dispersion relation.
    Dynamics {
        /// Wavenumbers `lo:hi:n`, log-spaced.
        #[arg(long)]
        g_range: Option<String>,
    },
    /// Agent-based simulation compared with the field solution.
    Abm {
        /// Number of seeds.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Total steps, burn-in included.
        #[arg(long, default_value_t = 2500)]
        steps: usize,
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
        #[arg(long, default_value_t = 2.5e-4)]
        dt: f64,
        /// Write per-seed trajectories every this many steps (0: off).
        #[arg(long, default_value_t = 0)]
        trajectory_stride: usize,
    },
    /// Re-solve over a list of values of one structural parameter.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Solve blocks independently (in parallel) instead of warm-starting each from the previous one.
        #[arg(long)]
        cold: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let g = cli.global;
    let common = Common {
        scenario: g.scenario,
        from: g.from,
        out: g.out,
        format: g.format,
        threads: g.threads,
        max_iter: g.max_iter,
    };
    let code = match &cli.command {
        Command::Solve => commands::with_manifest("solve", &common, || commands::cmd_solve(&common)),
        Command::Stability => commands::with_manifest("stability", &common, || commands::cmd_stability(&common)),
        Command::Dynamics { g_range } => {
            commands::with_manifest("dynamics", &common, || commands::cmd_dynamics(&common, g_range.as_deref()))
        }
        Command::Abm {
            seeds,
            seed_base,
            steps,
            burn_in,
            dt,
            trajectory_stride,
        } => {
            let args = AbmArgs {
                seeds: *seeds,
                seed_base: *seed_base,
                steps: *steps,
                burn_in: *burn_in,
                dt: *dt,
                trajectory_stride: *trajectory_stride,
            };
            commands::with_manifest("abm", &common, || commands::cmd_abm(&common, &args))
        }
        Command::Sweep { param, values, cold } => {
            commands::with_manifest("sweep", &common, || commands::cmd_sweep(&common, param, values, *cold))
        }
    };
    ExitCode::from(code as u8)
}

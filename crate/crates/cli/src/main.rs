//! `kppwaves`: travelling waves of reaction-diffusion equations from the
//! command line.
//!
//! Exit codes: 0 success, 1 input error, 2 no travelling wave, 3 numerical
//! failure.

// `!(x > 0.0)` is deliberate: it rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod json;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kppwaves::phase::{DEFAULT_EPS_SEED, DEFAULT_R_MIN, DEFAULT_TOL, DEFAULT_TOL_C};

#[derive(Debug, Parser)]
#[command(name = "kppwaves", version, about = "Travelling waves of degenerate Fisher-KPP equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Tolerances {
    /// Integrator tolerance for the phase equation.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Bisection tolerance for the critical speed.
    #[arg(long = "tol-c", default_value_t = DEFAULT_TOL_C)]
    pub tol_c: f64,
    /// Left end of the sampled phase solution.
    #[arg(long, default_value_t = DEFAULT_R_MIN)]
    pub rmin: f64,
    /// Distance from r = 1 at which the phase solution is seeded.
    #[arg(long = "eps-seed", default_value_t = DEFAULT_EPS_SEED)]
    pub eps_seed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Initial {
    /// Smoothed step from 1 to 0.
    Step,
    /// `u = 1` everywhere.
    One,
    /// `u = 0` everywhere.
    Zero,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regions, growth bound and existence verdict.
    Analyze {
        config: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regions and existence verdict, without the growth bound.
    Classify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Critical wave speed.
    Speed {
        config: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wave profile at speed `--c` (default: top of the critical-speed bracket).
    Profile {
        config: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
        #[arg(long)]
        c: Option<f64>,
        /// Number of profile samples.
        #[arg(long, default_value_t = kppwaves::profile::DEFAULT_GRID)]
        grid: usize,
        /// CSV of `z,U`; the report goes next to it with `.json` appended.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-dependent simulation from step-like data, with the front speed.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        tmax: f64,
        #[arg(long, default_value_t = kppwaves::pde::DEFAULT_H)]
        h: f64,
        #[arg(long, default_value_t = kppwaves::pde::DEFAULT_LENGTH)]
        length: f64,
        #[arg(long, value_enum, default_value_t = Initial::Step)]
        initial: Initial,
        /// CSV of the front history `t,x_front`; the report goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Region map over a grid of endpoint exponents near 1.
    Sweep {
        config: PathBuf,
        /// Grid as "g1=a:b:n,d1=a:b:n".
        #[arg(long = "grid-spec")]
        grid_spec: String,
        /// Solve each cell and attach the fitted decay exponent.
        #[arg(long)]
        solve: bool,
        #[command(flatten)]
        tol: Tolerances,
        /// CSV of the map; the report goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { config, out } => commands::analyze(&config, out.as_deref(), true),
        Command::Classify { config, out } => commands::analyze(&config, out.as_deref(), false),
        Command::Speed { config, tol, out } => commands::speed(&config, &tol, out.as_deref()),
        Command::Profile {
            config,
            tol,
            c,
            grid,
            out,
        } => commands::profile(&config, &tol, c, grid, out.as_deref()),
        Command::Simulate {
            config,
            tmax,
            h,
            length,
            initial,
            out,
        } => commands::simulate(&config, tmax, h, length, initial, out.as_deref()),
        Command::Sweep {
            config,
            grid_spec,
            solve,
            tol,
            out,
        } => commands::sweep(&config, &grid_spec, solve, &tol, out.as_deref()),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::from(report_code(&report))
        }
        Err(failure) => {
            eprintln!("kppwaves: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

/// Reports that declare nonexistence still print, but exit with 2.
fn report_code(report: &commands::Report) -> u8 {
    if report.no_wave {
        2
    } else {
        0
    }
}

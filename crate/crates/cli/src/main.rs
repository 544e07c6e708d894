use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use psvf::fields::{Family, Rho};

mod commands;
mod config;
mod error;
mod output;

use config::{parse_list, parse_range, parse_start, Format, RunConfig, Settings};
use error::CliError;

/// Piecewise-smooth vector fields with a switching plane: orbits, return maps and invariant sets.
#[derive(Parser, Debug)]
#[command(name = "psvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate an orbit, one segment per arc between switching-plane hits.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial point x,y,z.
        #[arg(long, value_parser = parse_start, allow_hyphen_values = true)]
        start: Option<[f64; 3]>,
        /// Number of full returns (two arcs each).
        #[arg(long)]
        returns: Option<usize>,
        /// Total integration time.
        #[arg(long)]
        time: Option<f64>,
    },
    /// Tabulate the radial return map.
    Poincare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        window: Window,
        /// Add the integrated return map as a cross-check.
        #[arg(long)]
        verify: bool,
    },
    /// Invariant planes, cylinders and limit cycles.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        window: Window,
        /// Number of cylinders to pair with planes for the infinite profile.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Radius at which plane multipliers are reported.
        #[arg(long)]
        reference_radius: Option<f64>,
        /// Check cycle multipliers by finite differences of the integrated map.
        #[arg(long)]
        verify: bool,
    },
    /// Cylinders for a list of perturbation sizes.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        window: Window,
        /// Comma-separated eps values.
        #[arg(long, allow_hyphen_values = true)]
        eps_list: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Window {
    /// Radial window a:b.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    y_range: Option<(f64, f64)>,
    /// Grid nodes (or samples for poincare).
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write a gnuplot script for the output.
    #[arg(long)]
    plot_script: Option<PathBuf>,
    /// z0, zl, zrho or zkl.
    #[arg(long)]
    family: Option<Family>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Number of invariant planes L.
    #[arg(long)]
    planes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Bump profile: f (finite) or i (infinite).
    #[arg(long)]
    rho: Option<Rho>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    event_tol: Option<f64>,
    #[arg(long)]
    max_flight_time: Option<f64>,
}

impl Common {
    fn settings(&self) -> Settings {
        Settings {
            family: self.family,
            lambda: self.lambda,
            mu: self.mu,
            planes: self.planes,
            eps: self.eps,
            rho: self.rho,
            k: self.k,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            event_tol: self.event_tol,
            max_flight_time: self.max_flight_time,
            format: self.format,
            ..Settings::default()
        }
    }
}

fn flag(v: bool) -> Option<bool> {
    v.then_some(true)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common, flags) = match cli.command {
        Command::Simulate { common, start, returns, time } => {
            let s = Settings { start, returns, time, ..common.settings() };
            ("simulate", common, s)
        }
        Command::Poincare { common, window, verify } => {
            let s = Settings { y_range: window.y_range, grid: window.grid, verify: flag(verify), ..common.settings() };
            ("poincare", common, s)
        }
        Command::Analyze { common, window, cutoff, reference_radius, verify } => {
            let s = Settings {
                y_range: window.y_range,
                grid: window.grid,
                cutoff,
                reference_radius,
                verify: flag(verify),
                ..common.settings()
            };
            ("analyze", common, s)
        }
        Command::Scan { common, window, eps_list } => {
            let eps_list =
                eps_list.map(|v| parse_list(&v).map_err(|e| CliError::Config(format!("eps-list: {e}")))).transpose()?;
            let s = Settings { y_range: window.y_range, grid: window.grid, eps_list, ..common.settings() };
            ("scan", common, s)
        }
    };
    let file = match &common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let cfg = RunConfig::resolve(file.overlay(flags))?;
    let table = match name {
        "simulate" => commands::simulate(&cfg)?,
        "poincare" => commands::poincare(&cfg)?,
        "analyze" => commands::analyze(&cfg)?,
        _ => commands::scan(&cfg)?,
    };
    let mut pairs = vec![("command", name.to_string())];
    pairs.extend(cfg.pairs());
    let bytes = table.render(&pairs, cfg.format)?;
    match &common.out {
        Some(path) => fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    if let Some((_, line)) = table.summary.iter().find(|(k, _)| *k == "summary") {
        eprintln!("{line}");
    }
    if let Some(path) = &common.plot_script {
        let data = common.out.as_ref().map_or("data.csv".to_string(), |p| p.display().to_string());
        fs::write(path, commands::plot_script(name, &data))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psvf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

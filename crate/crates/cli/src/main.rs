use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mtc_core::config::RunConfig;
use mtc_core::pipeline::{self, Manifest, EXIT_CONFIG};

/// Circuit-depth and entanglement scans of the mobile toric code ladder.
#[derive(Parser)]
#[command(name = "mtc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to everything it leaves out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. `--set model.widths=[4,6]` or
    /// `--set sampler.trajectories=200`. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set io.output_dir=DIR`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, mtc_core::config::ConfigError> {
        let mut overrides = Vec::new();
        if let Some(dir) = &self.output_dir {
            overrides.push(format!("io.output_dir={:?}", dir.display().to_string()));
        }
        overrides.extend(self.overrides.iter().cloned());
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ground states and trajectories for every (N, t) cell; writes depth.csv.
    Scan(Common),
    /// Leg entanglement entropies and the fitted γ; writes tee.csv.
    Tee(Common),
    /// Rational fits, derivative peaks and finite-size extrapolation of depth.csv.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Depth table to analyze; defaults to depth.csv in the output directory.
        #[arg(long)]
        depth: Option<PathBuf>,
    },
    /// Compare DMRG, sampler and entropy against exact diagonalization at N = 8.
    OracleCheck(Common),
    /// Print the effective configuration as TOML.
    ShowConfig(Common),
}

fn report(m: &Manifest) -> i32 {
    let count = |s| m.cells.iter().filter(|c| c.status == s).count();
    use pipeline::CellStatus::*;
    eprintln!(
        "{}: {} completed ({} resumed), {} failed, {} skipped",
        m.command,
        count(Completed),
        m.cells.iter().filter(|c| c.resumed).count(),
        count(Failed),
        count(Skipped)
    );
    for c in m.cells.iter().filter(|c| c.status != Completed) {
        eprintln!("  N={} t={}: {:?} {}", c.n, c.t, c.status, c.message.as_deref().unwrap_or(""));
    }
    for n in &m.notes {
        eprintln!("  {n}");
    }
    m.exit_code()
}

fn run(cli: Cli) -> Result<i32> {
    let common = match &cli.command {
        Command::Scan(c) | Command::Tee(c) | Command::OracleCheck(c) | Command::ShowConfig(c) => c,
        Command::Analyze { common, .. } => common,
    };
    let config = match common.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    Ok(match &cli.command {
        Command::Scan(_) => report(&pipeline::run_scan(&config)?),
        Command::Tee(_) => report(&pipeline::run_tee(&config)?),
        Command::Analyze { depth, .. } => {
            let path = depth.clone().unwrap_or_else(|| config.io.output_dir.join("depth.csv"));
            let (m, r) = pipeline::run_analyze(&config, &path)?;
            for (name, s) in [("d_tot", &r.d_tot), ("d_dw", &r.d_dw)] {
                if let Ok(s) = s {
                    println!("{name}: t_c = {:.4} ± {:.4}", s.t_c, s.t_c_se);
                }
            }
            for t in &r.normalized {
                if let Ok(x) = &t.result {
                    println!("t={}: d_tot/N intercept {:.4} ± {:.4} -> {}", t.t, x.intercept, x.intercept_se, x.phase);
                }
            }
            report(&m)
        }
        Command::OracleCheck(_) => {
            let (m, checks) = pipeline::run_oracle_check(&config)?;
            for c in &checks {
                println!("{} {}: {:.3e} (tol {:.0e})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            report(&m)
        }
        Command::ShowConfig(_) => {
            print!("{}", config.to_toml());
            0
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{CmdError, Table};
use config::{Axis, Oracle, Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Taylor-expansion pricer for European puts under BNS stochastic volatility.
#[derive(Parser)]
#[command(name = "bns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price every (strike, expiry, order) in the config.
    Price(Common),
    /// Vary one parameter and report errors against the oracle.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Option<Axis>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Remainder bounds next to the realised error.
    Bound {
        #[command(flatten)]
        common: Common,
        /// raw_theorem, cauchy_schwarz, rho_zero or auto.
        #[arg(long)]
        method: Option<String>,
    },
    /// Run built-in consistency checks.
    Selftest {
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Taylor orders, e.g. 2,3,4.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    oracle: Option<Oracle>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            orders: self.order.clone(),
            oracle: self.oracle,
            seed: self.seed,
            out: self.out.clone(),
            ..Default::default()
        }
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CmdError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CmdError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CmdError::Numeric(e.to_string()))?;
    }
    Ok(())
}

fn load(common: &Common, ov: Overrides) -> Result<RunConfig, CmdError> {
    set_threads(common.threads)?;
    RunConfig::load(&common.config, &ov).map_err(|errs| CmdError::Config(errs.join("\n  ")))
}

fn emit(table: &Table, out: Option<&PathBuf>) -> Result<(), CmdError> {
    let text = table.to_csv();
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CmdError::Numeric(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Price(common) => {
            let cfg = load(&common, common.overrides())?;
            emit(&commands::price(&cfg)?, cfg.out.as_ref())
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let ov = Overrides {
                axis,
                values,
                ..common.overrides()
            };
            let cfg = load(&common, ov)?;
            emit(&commands::sweep(&cfg)?, cfg.out.as_ref())
        }
        Command::Bound { common, method } => {
            let ov = Overrides {
                method,
                ..common.overrides()
            };
            let cfg = load(&common, ov)?;
            emit(&commands::bound(&cfg)?, cfg.out.as_ref())
        }
        Command::Selftest { threads } => {
            set_threads(threads)?;
            let results = commands::selftest();
            let failed = results.iter().filter(|r| !r.1).count();
            for (name, ok, detail) in &results {
                println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
            }
            if failed > 0 {
                return Err(CmdError::Numeric(format!(
                    "{failed} self-test check(s) failed"
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bns: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

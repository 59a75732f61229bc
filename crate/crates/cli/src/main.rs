//! `svlab` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svlab_core::scaling::fit_scaling;
use svlab_core::scenario::{read_pairs, run_scenario, Scenario};
use svlab_core::{par, Error, Tolerances};

#[derive(Parser)]
#[command(name = "svlab", version, about = "Line-variety incidence experiments in R^4")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a builtin or TOML scenario and write report.json plus CSV tables.
    Run {
        /// Builtin name or path to a TOML scenario file.
        #[arg(long)]
        scenario: String,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the δ sweep, e.g. `0.0625,0.03125`.
        #[arg(long, value_delimiter = ',')]
        delta: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Fit `log y = a + slope · log(1/x)` to two CSV columns.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "delta")]
        x: String,
        #[arg(long, default_value = "e_delta_dir")]
        y: String,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Command::Run { scenario, out, delta, seed, threads } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(d) = delta {
                s = s.with_deltas(d)?;
            }
            let report = par::with_threads(threads, || run_scenario(&s, &Tolerances::default()))?;
            report.write_to(&out)?;
            eprintln!("wrote {} result(s) to {}", report.results.len(), out.display());
            Ok(())
        }
        Command::Fit { input, x, y } => {
            let pairs = read_pairs(&input, &x, &y)?;
            let pairs: Vec<_> = pairs.into_iter().filter(|p| p.1 > 0.0).collect();
            let fit = fit_scaling(&pairs)?;
            println!("{}", serde_json::to_string_pretty(&fit).map_err(|e| Error::Io(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svlab: {e}");
            match e {
                Error::Config { .. } | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use streamrl::harness::config::{env_overrides, parse_overrides, parse_pairs};
use streamrl::harness::{
    report, run_grid, run_sweep, run_toy, toy_table, write_atomic, ExperimentConfig, ReportConfig, SweepConfig,
    ToyProblemConfig,
};
use streamrl::{Error, Result};

#[derive(Parser)]
#[command(name = "streamrl", version, about = "Streaming reinforcement learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Overrides, e.g. `optim.beta0=0.9 run.seeds=0,1,2`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (env, seed) pair and write eval.csv, train.csv and runs.csv.
    Run(Common),
    /// Run Adam on the two-parameter toy problem and write toy.csv.
    Toy(Common),
    /// Run one grid per combination of `sweep.<key> = a; b; c` values.
    Sweep(Common),
    /// Aggregate grid outputs into aggregates.csv and run_summary.csv.
    Report {
        /// Grid output directories or eval CSV files.
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for the report files.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// File values, then `STREAMRL_*` variables, then command-line overrides.
fn layered(common: &Common, keys: &[&str]) -> Result<Vec<(String, String)>> {
    let mut pairs = match &common.config {
        Some(p) => parse_pairs(&std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)?,
        None => Vec::new(),
    };
    pairs.extend(env_overrides(keys, std::env::vars()));
    pairs.extend(parse_overrides(&common.overrides)?);
    Ok(pairs)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let mut config = ExperimentConfig::default();
            config.apply(&layered(&common, ExperimentConfig::KEYS)?)?;
            if common.print_config {
                print!("{}", config.print());
                return Ok(());
            }
            let grid = run_grid(&config)?;
            println!(
                "{} runs ({} failed); results in {}",
                grid.runs.len(),
                grid.failures(),
                grid.out_dir.display()
            );
            for r in grid.runs.iter().filter(|r| r.failed()) {
                eprintln!("run {}/{}/seed {} failed: {:?}", r.algorithm, r.env, r.seed, r.status);
            }
        }
        Command::Toy(common) => {
            let mut config = ToyProblemConfig::default();
            config.apply(&layered(&common, ToyProblemConfig::KEYS)?)?;
            if common.print_config {
                print!("{}", config.print());
                return Ok(());
            }
            let rows = run_toy(&config)?;
            std::fs::create_dir_all(&config.out_dir)?;
            let path = config.out_dir.join("toy.csv");
            write_atomic(&path, &toy_table(&rows).to_bytes()?)?;
            let last = rows.last().expect("trajectory includes the start");
            println!(
                "final w = ({:e}, {:e}); trajectory in {}",
                last.w.0,
                last.w.1,
                path.display()
            );
        }
        Command::Sweep(common) => {
            let mut config = SweepConfig::default();
            // axis keys are open-ended, so only fixed keys come from the environment
            config.apply(&layered(&common, &SweepConfig::known_keys())?)?;
            if common.print_config {
                print!("{}", config.print());
                return Ok(());
            }
            let s = run_sweep(&config)?;
            println!(
                "{} cells; table in {}",
                s.table.rows.len(),
                config.base.out_dir.join("sweep.csv").display()
            );
        }
        Command::Report { inputs, out, common } => {
            let mut config = ReportConfig::default();
            for (k, v) in layered(&common, ReportConfig::KEYS)? {
                config.set(&k, &v)?;
            }
            if common.print_config {
                for k in ReportConfig::KEYS {
                    println!("{k} = {}", config.get(k).expect("listed keys are known"));
                }
                return Ok(());
            }
            let rep = report(&inputs, &config, &out)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} aggregate rows; results in {}",
                rep.aggregates.rows.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use obstacle_core::harness::{dump_fields, load_config, run_experiment, ExperimentConfig, RunOptions, Suite};
use obstacle_core::Error;

#[derive(Parser)]
#[command(name = "obstacle", version, about = "Penalized stochastic obstacle solver and property suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Worker threads for path-level parallelism.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides `monte_carlo.base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected property suites and write artifacts.
    Run(Common),
    /// Check the schema and the structural assumptions only.
    Validate(Common),
    /// Deterministic comparison against the projected SOR oracle only.
    Oracle(Common),
    /// Write the u, rho, psi and h_minus series of one path.
    DumpFields {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path_index: usize,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(&common.config).map_err(Failure::Config)?;
    if let Some(seed) = common.seed {
        cfg.monte_carlo.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn run_suites(common: &Common, tests: Option<Vec<Suite>>) -> Result<bool, Failure> {
    let mut cfg = load(common)?;
    if let Some(t) = tests {
        cfg.tests = t;
    }
    let opts = RunOptions {
        workers: common.workers.max(1),
        write: true,
    };
    let art = run_experiment(&cfg, &opts).map_err(Failure::Runtime)?;
    print!("{}", art.summary());
    for r in art.reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("{}: {}", r.name, r.error.as_deref().unwrap_or_default());
    }
    println!("artifacts: {}", cfg.output_dir.display());
    Ok(art.pass())
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Run(c) => run_suites(&c, None),
        Command::Validate(c) => run_suites(&c, Some(vec![Suite::Structural])),
        Command::Oracle(c) => run_suites(&c, Some(vec![Suite::Oracle])),
        Command::DumpFields { common, path_index } => {
            let cfg = load(&common)?;
            if path_index >= cfg.monte_carlo.n_paths {
                return Err(Failure::Config(Error::config(
                    "path-index",
                    format!("must be below n_paths = {}", cfg.monte_carlo.n_paths),
                )));
            }
            let file = dump_fields(&cfg, path_index, &cfg.output_dir).map_err(Failure::Runtime)?;
            println!("{}", file.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

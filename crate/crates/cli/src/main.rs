use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gifair_cli::config::{parse_config, population_lambda_max, ConfigError};
use gifair_cli::{report, runner};

#[derive(Parser)]
#[command(
    name = "gifair",
    about = "Deterministic federated-learning simulator with fairness-weighted client updates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config's `run.output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum number of concurrent runs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and validate a config file, reporting every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate the fairness tables under an output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(cfg_err) = cause.downcast_ref::<ConfigError>() {
            return match cfg_err {
                ConfigError::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<walkdir::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            jobs,
        } => {
            let cfg = parse_config(&config)?;
            let outcomes = runner::run_experiment(&cfg, out.as_deref(), seed, jobs)?;
            let diverged = outcomes.iter().filter(|o| o.diverged).count();
            println!(
                "completed {} run(s){}",
                outcomes.len(),
                if diverged > 0 {
                    format!(", {diverged} diverged (see manifests)")
                } else {
                    String::new()
                }
            );
            for o in &outcomes {
                println!("  {}", o.dir.display());
            }
            Ok(EXIT_OK)
        }
        Command::Validate { config } => {
            let cfg = parse_config(&config)?;
            let bound = population_lambda_max(&cfg.population)
                .map(|b| {
                    if b.is_finite() {
                        b.to_string()
                    } else {
                        "unbounded (single group)".to_string()
                    }
                })
                .unwrap_or_else(|e| format!("unavailable ({e})"));
            println!("config ok");
            println!(
                "  clients: {}  groups: {:?}",
                cfg.population.num_clients(),
                cfg.population.group_sizes
            );
            println!("  lambda_max: {bound}");
            println!(
                "  runs: {} seed(s) x {} sweep cell(s)",
                cfg.seeds.len(),
                cfg.sweep
                    .as_ref()
                    .map(|s| {
                        s.algorithms
                            .iter()
                            .map(|a| {
                                if *a == gifair_core::algorithms::Algorithm::FedAvg {
                                    1
                                } else {
                                    s.lambdas.len()
                                }
                            })
                            .sum::<usize>()
                    })
                    .unwrap_or(1)
            );
            Ok(EXIT_OK)
        }
        Command::Report { out } => {
            let table = report::report(&out)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use airbandit::config::{parse_sweep_arg, SimConfig};
use airbandit::harness::{emit_results, run_experiment, run_experiment_serial};

#[derive(Parser)]
#[command(name = "airbandit", version, about = "Federated linear bandit simulator with over-the-air aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv and manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the sweep, e.g. snr=25,35,50,inf | d=5,10,15,20,25 | m=10,20,30,40,50
    #[arg(long)]
    sweep: Option<String>,
    /// Run trials serially (results are identical either way).
    #[arg(long)]
    serial: bool,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run() -> airbandit::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let mut cfg = SimConfig::from_toml_file(&args.config)?;
            if let Some(trials) = args.trials {
                cfg.trials = trials;
            }
            if let Some(seed) = args.seed {
                cfg.base_seed = seed;
            }
            if let Some(sweep) = &args.sweep {
                cfg.sweep = Some(parse_sweep_arg(sweep)?);
            }
            cfg.validate()?;
            let results = if args.serial {
                run_experiment_serial(&cfg)?
            } else {
                run_experiment(&cfg)?
            };
            emit_results(&results, &args.out)?;
            for p in &results.points {
                println!(
                    "{}={}: final mean regret {:.3} (stderr {:.3}), syncs {:.1}, bound {:.3e}",
                    p.param,
                    p.value,
                    p.final_mean_regret,
                    p.final_stderr_regret,
                    p.mean_total_syncs,
                    p.theoretical_regret_bound
                );
            }
            Ok(())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use replikit_cli::{execute, CliError, Command, RunConfig};

/// Replicable clustering experiments.
#[derive(Debug, Parser)]
#[command(name = "replikit", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Paired trials; overrides `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Multiplies every sample budget; overrides `budget_scale`.
    #[arg(long = "budget-scale")]
    budget_scale: Option<f64>,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = RunConfig::load(&args.config)?;
    config.command = Some(args.command);
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if args.budget_scale.is_some() {
        config.budget_scale = args.budget_scale;
    }
    for path in execute(&config)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("replikit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use surgarm_cli::{compare_files, list_models, render, run_file, validate_file, CliError};

#[derive(Parser)]
#[command(name = "surgarm", version, about = "Closed-loop manipulator tracking scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Override a config value, e.g. `--set disturbance.scale=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Reserved; scenarios are deterministic.
    #[arg(long)]
    seed: Option<u64>,

    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate several controller variants sharing model, trajectory and disturbance.
    Compare {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file without simulating.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Show the built-in models and their default parameters.
    ListModels,
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out, common } => {
            let m = run_file(&config, &out, &common.overrides)?;
            if !common.quiet {
                print!("{}", m.to_kv());
            }
        }
        Command::Compare { config, out, common } => {
            let c = compare_files(&config, &out, &common.overrides)?;
            if !common.quiet {
                print!("{}", c.table);
            }
        }
        Command::Validate { config, common } => {
            let cfg = validate_file(&config, &common.overrides)?;
            if !common.quiet {
                print!("{}", render(&cfg));
            }
            println!("ok");
        }
        Command::ListModels => print!("{}", list_models()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("surgarm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

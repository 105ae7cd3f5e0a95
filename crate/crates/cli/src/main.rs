use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use env_logger::Env;
use mosco_lab_cli::{run, sweep, CliError, Experiment, Overrides};

#[derive(Parser)]
#[command(
    name = "mosco-lab",
    version,
    about = "Fixed-scale Cheeger energy experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment of a scenario file.
    Run(Common),
    /// Run one experiment per point of the scenario's `[sweep]` grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("MOSCO_LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let (args, is_sweep) = match cli.command {
        Command::Run(a) => (a, false),
        Command::Sweep(a) => (a, true),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build_global()
    {
        eprintln!("could not start thread pool: {e}");
        return ExitCode::from(4);
    }
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        experiment: args.experiment,
    };
    let result = if is_sweep {
        sweep(&args.config, &overrides)
    } else {
        run(&args.config, &overrides)
    };
    match result {
        Ok(m) => {
            println!("{}: {} files", m.experiment, m.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

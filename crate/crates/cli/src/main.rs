use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigexec::{execute, load_config, parse_config, CliError, Invocation, Mode, RunConfig};

#[derive(Parser)]
#[command(version, about = "Optimal execution and speculation with trade signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the value function and policy on the configured grid.
    Solve(Common),
    /// Simulate a stored policy and the configured baselines.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy dump written by `solve`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Solve, simulate and compare with and without the signal.
    Evaluate(Common),
    /// Repeat the evaluation over the configured signal probabilities.
    Sweep(Common),
    /// Run the model and solver invariant checks.
    Check(Common),
    /// Run the mode named in the config file.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted keys take benchmark values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn invocation(mode: Option<Mode>, common: &Common, policy: Option<PathBuf>) -> Result<Invocation, CliError> {
    let mut config: RunConfig = match &common.config {
        Some(path) => load_config(path)?,
        None => parse_config("")?,
    };
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    Ok(Invocation {
        mode: mode.unwrap_or(config.experiment.mode),
        config,
        out: common.out.clone(),
        policy,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, common, policy) = match cli.command {
        Command::Solve(c) => (Some(Mode::Solve), c, None),
        Command::Simulate { common, policy } => (Some(Mode::Simulate), common, policy),
        Command::Evaluate(c) => (Some(Mode::Evaluate), c, None),
        Command::Sweep(c) => (Some(Mode::Sweep), c, None),
        Command::Check(c) => (Some(Mode::Check), c, None),
        Command::Run(c) => (None, c, None),
    };

    let result = invocation(mode, &common, policy).and_then(|inv| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = common.threads {
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
        println!("sigexec {}  config {}  seed {}", inv.mode.as_str(), &inv.config.hash()[..16], inv.config.experiment.seed);
        pool.install(|| execute(&inv))
    });

    match result {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

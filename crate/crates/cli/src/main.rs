use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grassls_core::experiment::{
    cmd_check_grad, cmd_oracle, cmd_reproduce_example, cmd_solve, ExitStatus, RunConfig,
};

/// Geometrically robust least squares over a Grassmannian uncertainty ball.
#[derive(Parser)]
#[command(name = "grassls", version)]
struct Cli {
    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit without running.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a config file.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in 2-D worked example.
    ReproduceExample {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare analytic gradients against finite differences.
    CheckGrad {
        config: PathBuf,
        /// Scale the x-gradient by 1.01 to confirm the check can fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Compare the solver against a brute-force minimax search (n = 2, k = 1).
    Oracle {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dump(cli: &Cli) -> ExitStatus {
    let loaded = match &cli.command {
        Command::ReproduceExample { .. } => Ok(RunConfig::worked_example()),
        Command::Solve { config, .. }
        | Command::CheckGrad { config, .. }
        | Command::Oracle { config, .. } => RunConfig::load(config),
    };
    match loaded {
        Ok(mut cfg) => {
            if let Some(seed) = cli.seed {
                cfg.solver.seed = seed;
            }
            print!("{}", cfg.to_text());
            ExitStatus::Success
        }
        Err(errors) => {
            eprint!("{errors}");
            ExitStatus::ConfigError
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = if cli.dump_config {
        dump(&cli)
    } else {
        let mut log = std::io::stderr().lock();
        let status = match &cli.command {
            Command::Solve { config, out } => cmd_solve(config, out.as_deref(), cli.seed, &mut log),
            Command::ReproduceExample { out } => cmd_reproduce_example(out, cli.seed, &mut log),
            Command::CheckGrad {
                config,
                corrupt_gradient,
            } => cmd_check_grad(config, cli.seed, *corrupt_gradient, &mut log),
            Command::Oracle { config, out } => cmd_oracle(config, out.as_deref(), cli.seed, &mut log),
        };
        let _ = log.flush();
        status
    };
    ExitCode::from(status.code() as u8)
}

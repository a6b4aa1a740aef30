use std::path::PathBuf;
use std::process::ExitCode;

use bolza_cli::commands::{DEFAULT_TOL, EXIT_INPUT};
use bolza_cli::{
    cmd_converge, cmd_example51, cmd_solve, cmd_verify, ConvergeOptions, Example51Options, Outcome, SolveOptions,
    VerifyCmdOptions,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bolza", version, about = "Solve and certify Bolza problems with second-order inequality constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file, reconstruct the certificate and check it.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; the grid CSV is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored trajectory and certificate against one condition set.
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Defaults to the trajectory file.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// One of T3.1 T4.1 T4.2 T4.3 T5.1 C5.1 T5.2 C5.2 C5.3 T5.3.
        #[arg(long)]
        theorem: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refinement study over several grid sizes.
    Converge {
        #[arg(long)]
        problem: PathBuf,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The built-in worked example with its closed-form solution.
    Example51 {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value = "on")]
        analytic_check: Switch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve { problem, n, tol, seed, out } => cmd_solve(&SolveOptions { problem, n, tol, seed, out }),
        Command::Verify { problem, trajectory, certificate, theorem, tol, seed, out } => cmd_verify(&VerifyCmdOptions {
            problem,
            certificate: certificate.unwrap_or_else(|| trajectory.clone()),
            trajectory,
            theorem,
            tol,
            seed,
            out,
        }),
        Command::Converge { problem, n_list, seed, out } => cmd_converge(&ConvergeOptions { problem, n_list, seed, out }),
        Command::Example51 { n, tol, analytic_check, seed, out } => cmd_example51(&Example51Options {
            n,
            tol,
            analytic_check: matches!(analytic_check, Switch::On),
            seed,
            out,
        }),
    };
    match result {
        Ok(Outcome { code, text }) => {
            print!("{text}");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

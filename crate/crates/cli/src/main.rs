use clap::{Parser, Subcommand};
use ristep_cli::{commands, CliError};
use std::path::PathBuf;

/// Adaptive curve-parameter time stepping for rate-independent systems:
/// run experiments, certify trajectories, compare stepping strategies.
#[derive(Parser)]
#[command(name = "ristep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive scheme (or its nested-grid variant) per config file.
    Run {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simpson subintervals per step (overrides the config).
        #[arg(long)]
        nq: Option<usize>,
    },
    /// Certify a trajectory against the solution conditions.
    Verify {
        /// Model identifier: `one_d` or `fem2d_n<N>`.
        #[arg(long)]
        model: String,
        /// Trajectory CSV written by `run`.
        #[arg(long)]
        trajectory: PathBuf,
        /// State snapshots (CSV or binary) written by `run`.
        #[arg(long)]
        states: PathBuf,
        /// Run summary JSON; supplies the tolerance for the default gates.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Run tolerance for the default gates (alternative to --summary).
        #[arg(long)]
        tol: Option<f64>,
        /// Gate preset: `default` (tolerance-aware) or `strict` (1e-8).
        #[arg(long, default_value = "default")]
        gates: String,
        /// Simpson subintervals per interval for the certification.
        #[arg(long, default_value_t = 64)]
        nq_fine: usize,
        /// Report JSON path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a tolerance sweep and write a comparison table.
    Sweep {
        /// TOML configuration file with a `[sweep]` section.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stepping mode: `adaptive`, `uniform` or `nested`.
        #[arg(long)]
        mode: Option<String>,
        /// Simpson subintervals per step (overrides the config).
        #[arg(long)]
        nq: Option<usize>,
    },
    /// Write the structured mesh and assembled operators as JSON.
    DumpMesh {
        /// Nodes per side of the unit square.
        #[arg(long, default_value_t = 21)]
        n: usize,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, nq } => commands::cmd_run(&config, out, nq),
        Command::Verify {
            model,
            trajectory,
            states,
            summary,
            tol,
            gates,
            nq_fine,
            out,
        } => commands::cmd_verify(
            &model,
            &trajectory,
            &states,
            summary.as_deref(),
            tol,
            &gates,
            nq_fine,
            out.as_deref(),
        ),
        Command::Sweep {
            config,
            out,
            mode,
            nq,
        } => commands::cmd_sweep(&config, out, mode, nq),
        Command::DumpMesh { n, out } => commands::cmd_dump_mesh(n, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

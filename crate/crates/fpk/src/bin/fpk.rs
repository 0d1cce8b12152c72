//! Thin command-line front end over [`fpk::runner`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpk::runner::{self, Subcommand as Cmd};

#[derive(Parser)]
#[command(
    name = "fpk",
    about = "Mesh-free pointwise solver for time-dependent Fokker-Planck equations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Cap the number of worker threads (results are identical for any cap).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: FPK_OUT env var, then current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Commands {
    /// Estimate the density on a grid or at a point.
    Solve(CommonArgs),
    /// Monte-Carlo histogram reference solution.
    Mc(CommonArgs),
    /// Containment curve xi(t, D, omega) of the transformed SDE.
    Xi(CommonArgs),
    /// Escape-fraction vs estimation-error study over nested omegas.
    EscapeStudy(CommonArgs),
    /// One-step filtering density from a partial observation.
    Filter(CommonArgs),
    /// Slice-normalized 2D marginal of a grid solve.
    Marginal(CommonArgs),
    /// Demonstrate the failure of the sampled physics-informed objective.
    PinnDemo(CommonArgs),
    /// Check the linear-growth bound mu(x).x <= C(1 + |x|^2) on samples.
    CheckGrowth(CommonArgs),
    /// Simulate and dump a transformed-SDE trajectory batch for reuse.
    DumpTraj(CommonArgs),
    /// Re-score a dumped batch against a (possibly new) initial density.
    Rescore(CommonArgs),
}

fn split(commands: &Commands) -> (Cmd, &CommonArgs) {
    match commands {
        Commands::Solve(a) => (Cmd::Solve, a),
        Commands::Mc(a) => (Cmd::Mc, a),
        Commands::Xi(a) => (Cmd::Xi, a),
        Commands::EscapeStudy(a) => (Cmd::EscapeStudy, a),
        Commands::Filter(a) => (Cmd::Filter, a),
        Commands::Marginal(a) => (Cmd::Marginal, a),
        Commands::PinnDemo(a) => (Cmd::PinnDemo, a),
        Commands::CheckGrowth(a) => (Cmd::CheckGrowth, a),
        Commands::DumpTraj(a) => (Cmd::DumpTraj, a),
        Commands::Rescore(a) => (Cmd::Rescore, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = split(&cli.command);

    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("fpk: could not configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os("FPK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    match runner::run(cmd, &args.config, &out_dir) {
        Ok(output) => {
            for line in &output.lines {
                println!("{line}");
            }
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            if output.check_failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("fpk {}: {e}", cmd.name());
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

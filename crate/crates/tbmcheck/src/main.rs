//! Command-line entry point.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use tbmcheck::cli::{self, Command};

#[derive(Parser)]
#[command(
    name = "tbmcheck",
    about = "Numerical checks of curvature bounds and the timelike Brunn-Minkowski inequality on analytic weighted spacetimes",
    version
)]
struct Args {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output path for line-delimited records (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Prints extra progress information.
    #[arg(long)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Curvature tensors at a chart point.
    Curvature,
    /// Integrate a geodesic initial-value problem.
    Geodesic,
    /// Time separation of an ordered point pair.
    Separation,
    /// Reduced and full distortion coefficient table.
    DistortionTable,
    /// Volume-distortion differential inequality along a transport flow.
    CheckOde,
    /// TBM(K, N) verdict for a configured region pair.
    CheckTbm,
    /// Curvature scan plus certified TBM violation search.
    Counterexample,
    /// Discrete q-Lorentz-Wasserstein coupling for atom measures.
    LwDistance,
}

fn main() {
    let args = Args::parse();
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool initialized once");
    }
    let command = match args.command {
        Cmd::Curvature => Command::Curvature,
        Cmd::Geodesic => Command::Geodesic,
        Cmd::Separation => Command::Separation,
        Cmd::DistortionTable => Command::DistortionTable,
        Cmd::CheckOde => Command::CheckOde,
        Cmd::CheckTbm => Command::CheckTbm,
        Cmd::Counterexample => Command::Counterexample,
        Cmd::LwDistance => Command::LwDistance,
    };
    let exit = cli::execute(
        &args.config,
        args.out.as_deref(),
        args.seed,
        command,
        args.verbose,
    );
    std::process::exit(exit);
}

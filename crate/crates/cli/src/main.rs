mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Preset;

/// Distance fields and globally length-minimising geodesics on immersed
/// manifolds.
#[derive(Parser)]
#[command(name = "geodesic-atlas", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by commands that resolve a manifold and run configuration.
#[derive(Args, Clone, Debug)]
struct CommonArgs {
    /// Built-in manifold: plane, unit-sphere, or peaks.
    manifold: String,
    /// Height scale for the peaks surface.
    #[arg(long)]
    scale: Option<f64>,
    /// Config file (TOML); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Schedule preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args, Clone, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    adam_steps: Option<usize>,
    #[arg(long)]
    lbfgs_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    heldout_grid: Option<usize>,
    /// Use a plain tanh MLP instead of the gated two-encoder backbone.
    #[arg(long)]
    plain_mlp: bool,
}

#[derive(Args, Clone, Debug, Default)]
struct ChainFlags {
    /// Number of MH chains.
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Kept samples per chain.
    #[arg(long)]
    keep: Option<usize>,
    #[arg(long)]
    proposal_std: Option<f64>,
    /// Weight of the curvature KDE in the mixture distribution.
    #[arg(long)]
    mix_weight: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print metric, Christoffel symbols, and scalar curvature at points;
    /// optionally export a curvature grid.
    Describe {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluation point `x,y` (repeatable).
        #[arg(long = "at", value_name = "X,Y")]
        at: Vec<String>,
        /// Export an NxN curvature grid CSV.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run curvature-weighted MH chains; export samples and the KDE grid.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        chains: ChainFlags,
        /// KDE export grid resolution.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train a distance field: sample, Adam, L-BFGS, residual audit.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Field origin `x,y`.
        #[arg(long, value_name = "X,Y")]
        origin: String,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        chains: ChainFlags,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Evaluate a trained field on a grid: phi, chart gradient, flow.
    Field {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Output CSV path (defaults to `field.csv` next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the geodesic flow from a point and compare with the geodesic
    /// ODE launched along the same initial direction.
    Trace {
        checkpoint: PathBuf,
        /// Start point `x,y`.
        #[arg(long, value_name = "X,Y")]
        from: String,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train one field per origin on a k x k grid and tabulate pairwise
    /// distances against the discrete oracle.
    Symmetry {
        #[command(flatten)]
        common: CommonArgs,
        /// Origins per dimension (the paper-scale study uses 7).
        #[arg(long, default_value_t = 3)]
        grid_k: usize,
        /// Dijkstra oracle resolution.
        #[arg(long, default_value_t = 64)]
        oracle_res: usize,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        chains: ChainFlags,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("GEODESIC_ATLAS_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    init_threads();
    let result = match cli.command {
        Command::Describe {
            common,
            at,
            grid,
            out_dir,
        } => commands::describe(common, at, grid, out_dir),
        Command::Sample {
            common,
            chains,
            grid,
            out_dir,
        } => commands::sample(common, chains, grid, out_dir),
        Command::Train {
            common,
            origin,
            train,
            chains,
            out_dir,
        } => commands::train(common, origin, train, chains, out_dir),
        Command::Field {
            checkpoint,
            grid,
            out,
        } => commands::field(checkpoint, grid, out),
        Command::Trace {
            checkpoint,
            from,
            step,
            max_steps,
            out_dir,
        } => commands::trace(checkpoint, from, step, max_steps, out_dir),
        Command::Symmetry {
            common,
            grid_k,
            oracle_res,
            train,
            chains,
            out_dir,
        } => commands::symmetry(common, grid_k, oracle_res, train, chains, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Multiple-scattering simulator: forward solves, backprojection, datasets
/// and validation against the analytic cylinder solution.
#[derive(Parser, Debug)]
#[command(name = "scatter", version, about)]
struct Cli {
    /// Maximum number of worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Print the command result (exit code, artifacts, metrics) as one JSON
    /// line at the end.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate scattered-field measurements for one potential.
    Simulate {
        /// Scene JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Potential: an SCTN file of real n x n values (1/m^2), or
        /// builtin:zero, builtin:cylinder:<radius_m>:<eps_c>,
        /// builtin:phantom:<seed>:<f_max>.
        #[arg(long)]
        potential: String,
        /// Output directory for y.sctn and y.json.
        #[arg(long)]
        out: PathBuf,
        /// Input SNR in dB; omitted for noiseless data.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Backproject measurements into the image domain.
    Backproject {
        /// Scene JSON file the measurements were simulated with.
        #[arg(long)]
        config: PathBuf,
        /// K x M complex SCTN measurements.
        #[arg(long)]
        measurements: PathBuf,
        /// Output directory for w.sctn.
        #[arg(long)]
        out: PathBuf,
        /// Also write Re, Im and magnitude images as PGM.
        #[arg(long)]
        pgm: bool,
    },
    /// Compare the solver with the analytic cylinder solution.
    Validate {
        /// Validation case; only `cylinder` is available.
        #[arg(long, default_value = "cylinder")]
        preset: String,
        /// Grid sides to run, repeatable (default 32, 64, 128).
        #[arg(long = "grid")]
        grids: Vec<usize>,
        /// Largest accepted relative error on the last grid.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Cylinder relative permittivity.
        #[arg(long)]
        eps_c: Option<f64>,
        /// Cylinder radius in meters.
        #[arg(long)]
        radius: Option<f64>,
        /// Side of the square domain in meters.
        #[arg(long)]
        size: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Generate a dataset of potentials, measurements and backprojections.
    Dataset {
        /// Experiment JSON file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Named experiment preset (see `scatter preset --list`).
        #[arg(long)]
        preset: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the noise seed of the configuration.
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Reconstruction SNR of an estimate against a reference.
    Metrics {
        /// Real SCTN estimate.
        #[arg(long)]
        estimate: PathBuf,
        /// Real SCTN reference.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Linearized least-squares reconstruction.
    Reconstruct {
        /// Reconstruction method; only `born` is available.
        #[arg(long, default_value = "born")]
        method: String,
        /// Scene JSON file (single reconstruction).
        #[arg(long, required_unless_present = "dataset")]
        config: Option<PathBuf>,
        /// K x M complex SCTN measurements (single reconstruction).
        #[arg(long, required_unless_present = "dataset")]
        measurements: Option<PathBuf>,
        /// Output directory for x_hat.sctn (single reconstruction).
        #[arg(long, required_unless_present = "dataset")]
        out: Option<PathBuf>,
        /// Reference potential; prints recon SNR when given.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Absolute Tikhonov weight.
        #[arg(long, conflicts_with = "tau_rel")]
        tau: Option<f64>,
        /// Tikhonov weight relative to the largest normal-operator eigenvalue.
        #[arg(long, default_value_t = 1e-6)]
        tau_rel: f64,
        /// Maximum conjugate-gradient iterations.
        #[arg(long, default_value_t = 500)]
        iters: usize,
        /// Also write x_hat.pgm.
        #[arg(long)]
        pgm: bool,
        /// Dataset directory: reconstruct every included sample of `--split`.
        #[arg(long, conflicts_with_all = ["config", "measurements", "reference"])]
        dataset: Option<PathBuf>,
        /// Split to reconstruct in dataset mode.
        #[arg(long, default_value = "test")]
        split: String,
        /// CSV table (sweep_value, mean_snr_db, std_snr_db, n) in dataset mode.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a preset configuration as JSON.
    Preset {
        /// Preset name.
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        /// List preset names.
        #[arg(long)]
        list: bool,
    },
}

#[derive(clap::Args, Debug, Clone)]
struct SolverArgs {
    /// Relative residual target of the total-field solve.
    #[arg(long = "solver-tol", default_value_t = 1e-6)]
    solver_tol: f64,
    /// Iteration cap of the total-field solve.
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Krylov method: bicgstab or cgnr.
    #[arg(long, default_value = "bicgstab")]
    method: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(commands::EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(commands::EXIT_CONFIG);
        }
    }
    let result = commands::run(cli.command);
    match result {
        Ok(res) => {
            for a in &res.artifacts {
                println!("wrote {}", a.display());
            }
            if cli.json {
                println!("{}", res.to_json());
            }
            ExitCode::from(res.exit_code)
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            if cli.json {
                println!("{}", serde_json::json!({"exit_code": e.exit_code, "error": e.message}));
            }
            ExitCode::from(e.exit_code)
        }
    }
}

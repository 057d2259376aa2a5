use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shared_rep::harness::{
    classify_phase, emit_plot_data, profile_grid, read_configs_csv, read_rows_csv, sweep, trial_instance,
    write_configs_csv, write_rows_csv, ConfigGrid, Profile, Recipe, Setup, SweepResult,
};
use shared_rep::io;
use shared_rep::subspace::principal_angle_distance;
use shared_rep::transfer::{fit_new_client, private_fit_new_client, PrivacyParams};
use shared_rep::{Error, EstimatorKind, Result};

#[derive(Parser)]
#[command(name = "shared-rep", version, about = "Spectral estimation of shared linear representations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment or grid file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Built-in preset used when no config file is given.
    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ground truth and one repetition's dataset bundle.
    Generate {
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Fit a subspace on a dataset bundle.
    Estimate {
        /// Bundle directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "replica")]
        estimator: String,
        #[arg(long)]
        k: usize,
        /// Ground truth JSON; when given the sin-theta error is reported.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Permute samples within each client before fitting.
        #[arg(long)]
        shuffle: bool,
    },
    /// Run every configuration of a grid and write sweep.csv and configs.csv.
    Sweep {
        /// With --profile: diagonal covariances and uneven client sizes.
        #[arg(long)]
        heterogeneous: bool,
        /// Record wall-clock times (output is then no longer reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Fit a new client's head on a saved subspace estimate.
    Transfer {
        #[arg(long)]
        estimate: PathBuf,
        /// Client CSV with columns x_1..x_d, y.
        #[arg(long)]
        client: PathBuf,
        /// Privacy budget; enables the private mechanism.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        clip: f64,
    },
    /// Classify a scaling triple into regions I to IV.
    Phase {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Summarize a sweep into per-series CSVs.
    Plot {
        /// Directory containing sweep.csv and configs.csv.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        svg: bool,
    },
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_grid(common: &Common, setup: Setup) -> Result<ConfigGrid> {
    let mut grid = match (&common.config, common.profile) {
        (Some(path), _) => ConfigGrid::from_toml_any(&fs::read_to_string(path)?)?,
        (None, Some(profile)) => profile_grid(profile, setup),
        (None, None) => return Err(Error::Config("either --config or --profile is required".into())),
    };
    if let Some(seed) = common.seed {
        grid.base.master_seed = seed;
    }
    Ok(grid)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Generate { repetition } => {
            let grid = load_grid(common, Setup::Homogeneous)?;
            let configs = grid.expand()?;
            if configs.len() != 1 {
                return Err(Error::Config(format!("generate needs a single configuration, got {}", configs.len())));
            }
            let inst = trial_instance(&configs[0], repetition)?;
            let hash = format!("{:016x}", inst.config_hash);
            write_file(&common.out_dir.join(io::GROUND_TRUTH_FILE), io::ground_truth_to_json(&inst.ground_truth)?)?;
            let bundle = common.out_dir.join("data");
            io::write_bundle(&bundle, &inst.dataset, Some(inst.seed), Some(hash))?;
            println!("{}", bundle.display());
        }
        Command::Estimate { data, estimator, k, truth, shuffle } => {
            let kind: EstimatorKind = estimator.parse()?;
            let (manifest, mut dataset) = io::read_bundle(&data)?;
            if shuffle {
                dataset = dataset.shuffled(common.seed.unwrap_or(0));
            }
            let est = kind.estimate(&dataset, k)?;
            if est.degenerate_gap {
                log::warn!("spectral gap at k={k} is degenerate; the subspace is not unique");
            }
            let path = common.out_dir.join("estimate.csv");
            write_file(&path, io::estimate_to_csv(&est, manifest.seed, manifest.config_hash)?)?;
            if let Some(truth) = truth {
                let gt = io::ground_truth_from_json(&fs::read_to_string(truth)?)?;
                println!("sin_theta_error={}", principal_angle_distance(&est.basis, &gt.b_star)?);
            }
        }
        Command::Sweep { heterogeneous, timing } => {
            let setup = if heterogeneous { Setup::Heterogeneous } else { Setup::Homogeneous };
            let grid = load_grid(common, setup)?;
            let result = sweep(&grid, common.parallelism)?;
            let failed = result.rows.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                log::warn!("{failed} of {} rows carry an error sentinel", result.rows.len());
            }
            let mut rows = Vec::new();
            write_rows_csv(&mut rows, &result.rows, timing)?;
            write_file(&common.out_dir.join("sweep.csv"), rows)?;
            let mut configs = Vec::new();
            write_configs_csv(&mut configs, &result.configs)?;
            write_file(&common.out_dir.join("configs.csv"), configs)?;
        }
        Command::Transfer { estimate, client, epsilon, delta, clip } => {
            let (_, est) = io::read_estimate(&estimate)?;
            let data = io::read_client_csv(&client)?;
            let fit = match epsilon {
                Some(epsilon) => {
                    let params = PrivacyParams { epsilon, delta, clip_bound: clip };
                    private_fit_new_client(&est, &data.x, &data.y, &params, common.seed.unwrap_or(0))?
                }
                None => fit_new_client(&est, &data.x, &data.y)?,
            };
            let out = json!({
                "method": fit.method,
                "alpha_hat": fit.alpha_hat.as_slice(),
                "theta_hat": fit.theta_hat.as_slice(),
                "underdetermined": fit.underdetermined,
                "privacy": fit.privacy,
            });
            write_file(&common.out_dir.join("transfer.json"), serde_json::to_string_pretty(&out)? + "\n")?;
        }
        Command::Phase { beta, gamma, delta } => {
            if !(beta > 0.0 && gamma > 0.0 && delta > 0.0) {
                return Err(Error::Config("beta, gamma and delta must be positive".into()));
            }
            let region = classify_phase(beta, gamma, delta);
            let verdict = if region.consistent_estimation_possible() { "possible" } else { "impossible" };
            println!("region {region}: consistent estimation {verdict}");
        }
        Command::Plot { input, recipe, svg } => {
            let recipe: Recipe = recipe.parse()?;
            let result = SweepResult {
                configs: read_configs_csv(fs::File::open(input.join("configs.csv"))?)?,
                rows: read_rows_csv(fs::File::open(input.join("sweep.csv"))?)?,
            };
            for path in emit_plot_data(&result, recipe, &common.out_dir, svg)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

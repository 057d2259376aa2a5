use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{ConfigGrid, ExperimentConfig};
use crate::diversity::{diversity_matrix, spectrum};
use crate::error::{Error, Result};
use crate::linalg::gaussian_vector;
use crate::model::{sample_nonlinear_dataset, sample_partitions, FederatedDataset, GroundTruth};
use crate::rng::{derive_seed, derived_rng, stream};
use crate::subspace::{principal_angle_distance, SubspaceEstimate};
use crate::transfer::{fit_new_client, independent_baseline, private_fit_new_client, PrivacyParams};

pub const CSV_VERSION_LINE: &str = "# shared-rep sweep v1";
pub const CSV_HEADER: [&str; 8] = [
    "config_hash",
    "estimator",
    "seed",
    "sin_theta_error",
    "transfer_error",
    "lambda1",
    "lambdak",
    "wallclock_ms",
];

/// Estimator label of the independent-learning baseline rows.
pub const INDEPENDENT: &str = "independent";

/// One (config, estimator, repetition) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config_hash: u64,
    pub estimator: String,
    pub repetition: usize,
    /// Seed the repetition's dataset was drawn from.
    pub seed: u64,
    /// `None` for rows without a subspace estimate; NaN when the estimator failed.
    pub sin_theta_error: Option<f64>,
    pub transfer_error: Option<f64>,
    pub lambda1: f64,
    pub lambdak: f64,
    pub wallclock_ms: f64,
    pub diagnostic: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.diagnostic.is_some()
    }
}

/// Grid coordinates of a configuration, for joining rows to axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub config_hash: u64,
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub total_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub configs: Vec<ConfigSummary>,
    pub rows: Vec<SweepRow>,
}

struct TrialContext {
    hash: u64,
    gt: GroundTruth,
    partitions: Vec<usize>,
    lambda1: f64,
    lambdak: f64,
    new_client_alpha: DVector<f64>,
}

impl TrialContext {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let gt = GroundTruth::generate(&config.ground_truth_spec(), derive_seed(&[hash, stream::GROUND_TRUTH]))?;
        let partitions = sample_partitions(&config.partition, config.m, derive_seed(&[hash, stream::PARTITIONS]))?;
        let spec = spectrum(&diversity_matrix(&gt.alphas, &partitions)?)?;
        let mut rng = derived_rng(&[hash, stream::NEW_CLIENT]);
        let new_client_alpha = loop {
            let a = gaussian_vector(&mut rng, config.k) / (config.k as f64).sqrt();
            if a.norm() <= crate::model::DEFAULT_ALPHA_BOUND {
                break a;
            }
        };
        Ok(Self { hash, gt, partitions, lambda1: spec.lambda1, lambdak: spec.lambdak, new_client_alpha })
    }

    fn summary(&self, config: &ExperimentConfig) -> ConfigSummary {
        ConfigSummary {
            config_hash: self.hash,
            d: config.d,
            k: config.k,
            m: config.m,
            total_samples: self.partitions.iter().sum(),
        }
    }
}

/// Seed of repetition `rep`'s dataset: depends only on `(master_seed, rep)`.
pub fn repetition_seed(master_seed: u64, repetition: usize) -> u64 {
    derive_seed(&[master_seed, repetition as u64])
}

/// Runs every estimator of `config` on the dataset of one repetition.
pub fn run_trial(config: &ExperimentConfig, repetition: usize) -> Result<Vec<SweepRow>> {
    let ctx = TrialContext::new(config)?;
    trial_rows(config, &ctx, repetition)
}

/// The ground truth and dataset a trial sees, for export.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub config_hash: u64,
    pub seed: u64,
    pub ground_truth: GroundTruth,
    pub dataset: FederatedDataset,
}

pub fn trial_instance(config: &ExperimentConfig, repetition: usize) -> Result<TrialInstance> {
    let ctx = TrialContext::new(config)?;
    let seed = repetition_seed(config.master_seed, repetition);
    let dataset = trial_dataset(config, &ctx, seed)?;
    Ok(TrialInstance { config_hash: ctx.hash, seed, ground_truth: ctx.gt, dataset })
}

fn trial_dataset(config: &ExperimentConfig, ctx: &TrialContext, seed: u64) -> Result<FederatedDataset> {
    sample_nonlinear_dataset(&ctx.gt, &config.link.to_spec(), &ctx.partitions, derive_seed(&[seed, stream::DATA]))
}

fn trial_rows(config: &ExperimentConfig, ctx: &TrialContext, repetition: usize) -> Result<Vec<SweepRow>> {
    let seed = repetition_seed(config.master_seed, repetition);
    let data = trial_dataset(config, ctx, seed)?;

    let new_client = match &config.transfer {
        Some(t) => {
            let mut rng = derived_rng(&[seed, stream::TRANSFER_DATA]);
            let x = crate::linalg::gaussian_matrix(&mut rng, t.n_new, config.d);
            let theta = &ctx.gt.b_star * &ctx.new_client_alpha;
            let y = &x * &theta + gaussian_vector(&mut rng, t.n_new) * config.noise_sigma;
            Some((t, x, y, theta))
        }
        None => None,
    };

    let row = |estimator: String| SweepRow {
        config_hash: ctx.hash,
        estimator,
        repetition,
        seed,
        sin_theta_error: None,
        transfer_error: None,
        lambda1: ctx.lambda1,
        lambdak: ctx.lambdak,
        wallclock_ms: 0.0,
        diagnostic: None,
    };

    let mut rows = Vec::with_capacity(config.estimators.len() + 1);
    for kind in &config.estimators {
        let mut r = row(kind.to_string());
        let start = Instant::now();
        let outcome = kind.estimate(&data, config.k).and_then(|est| {
            let dist = principal_angle_distance(&est.basis, &ctx.gt.b_star)?;
            let transfer = match &new_client {
                Some((t, x, y, theta)) => Some(transfer_error(&est, t, x, y, theta, seed)?),
                None => None,
            };
            Ok((dist, transfer))
        });
        r.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok((dist, transfer)) => {
                r.sin_theta_error = Some(dist);
                r.transfer_error = transfer;
            }
            Err(e) => {
                log::warn!("config {:016x} rep {repetition}: {kind} failed: {e}", ctx.hash);
                r.sin_theta_error = Some(f64::NAN);
                r.diagnostic = Some(e.to_string());
            }
        }
        rows.push(r);
    }

    if let Some((t, x, y, theta)) = &new_client {
        if t.independent_baseline {
            let mut r = row(INDEPENDENT.to_string());
            let start = Instant::now();
            match independent_baseline(x, y) {
                Ok(theta_hat) => r.transfer_error = Some((theta_hat - theta).norm()),
                Err(e) => {
                    r.transfer_error = Some(f64::NAN);
                    r.diagnostic = Some(e.to_string());
                }
            }
            r.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
    }
    Ok(rows)
}

fn transfer_error(
    est: &SubspaceEstimate,
    block: &super::config::TransferBlock,
    x: &nalgebra::DMatrix<f64>,
    y: &DVector<f64>,
    theta: &DVector<f64>,
    seed: u64,
) -> Result<f64> {
    let fit = match block.epsilon {
        Some(epsilon) => {
            let params = PrivacyParams { epsilon, delta: block.delta, clip_bound: block.clip_bound };
            private_fit_new_client(est, x, y, &params, derive_seed(&[seed, stream::PRIVACY]))?
        }
        None => fit_new_client(est, x, y)?,
    };
    Ok((fit.theta_hat - theta).norm())
}

/// Runs every configuration of the grid for all repetitions. Rows come back
/// in grid order, then repetition, then estimator order, whatever the
/// parallelism.
pub fn sweep(grid: &ConfigGrid, parallelism: usize) -> Result<SweepResult> {
    sweep_configs(&grid.expand()?, parallelism)
}

pub fn sweep_configs(configs: &[ExperimentConfig], parallelism: usize) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(Error::Config("empty configuration grid".into()));
    }
    let mut seen = HashSet::new();
    for c in configs {
        if !seen.insert(c.hash()) {
            return Err(Error::Config(format!("duplicate configuration {}", c.hash_hex())));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        let contexts = configs
            .par_iter()
            .map(TrialContext::new)
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = configs
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..c.repetitions).map(move |r| (i, r)))
            .collect();
        let chunks = jobs
            .par_iter()
            .map(|&(i, r)| trial_rows(&configs[i], &contexts[i], r))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            configs: configs.iter().zip(&contexts).map(|(c, ctx)| ctx.summary(c)).collect(),
            rows: chunks.into_iter().flatten().collect(),
        })
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the versioned results CSV. Wall-clock times are only written when
/// `timing` is set, so that the default output is byte-reproducible.
pub fn write_rows_csv<W: Write>(mut out: W, rows: &[SweepRow], timing: bool) -> Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:016x}", r.config_hash),
            r.estimator.clone(),
            r.seed.to_string(),
            fmt_opt(r.sin_theta_error),
            fmt_opt(r.transfer_error),
            r.lambda1.to_string(),
            r.lambdak.to_string(),
            if timing { format!("{:.3}", r.wallclock_ms) } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const CONFIGS_HEADER: [&str; 5] = ["config_hash", "d", "k", "M", "N"];

pub fn write_configs_csv<W: Write>(out: W, configs: &[ConfigSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONFIGS_HEADER)?;
    for c in configs {
        w.write_record([
            format!("{:016x}", c.config_hash),
            c.d.to_string(),
            c.k.to_string(),
            c.m.to_string(),
            c.total_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_hex(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|e| Error::Parse(format!("bad config hash '{s}': {e}")))
}

fn parse_f64(s: &str, field: &str) -> Result<f64> {
    s.parse().map_err(|e| Error::Parse(format!("bad {field} '{s}': {e}")))
}

fn parse_opt(s: &str, field: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, field).map(Some)
    }
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut reps = std::collections::HashMap::<(u64, String), usize>::new();
    for rec in reader.records() {
        let rec = rec?;
        let config_hash = parse_hex(&rec[0])?;
        let estimator = rec[1].to_string();
        let counter = reps.entry((config_hash, estimator.clone())).or_default();
        let sin_theta_error = parse_opt(&rec[3], "sin_theta_error")?;
        rows.push(SweepRow {
            config_hash,
            estimator,
            repetition: *counter,
            seed: rec[2].parse().map_err(|e| Error::Parse(format!("bad seed: {e}")))?,
            diagnostic: sin_theta_error.filter(|v| v.is_nan()).map(|_| "failed".to_string()),
            sin_theta_error,
            transfer_error: parse_opt(&rec[4], "transfer_error")?,
            lambda1: parse_f64(&rec[5], "lambda1")?,
            lambdak: parse_f64(&rec[6], "lambdak")?,
            wallclock_ms: parse_opt(&rec[7], "wallclock_ms")?.unwrap_or(0.0),
        });
        *counter += 1;
    }
    Ok(rows)
}

pub fn read_configs_csv<R: std::io::Read>(input: R) -> Result<Vec<ConfigSummary>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|e| Error::Parse(format!("bad integer '{}': {e}", &rec[i])))
        };
        out.push(ConfigSummary { config_hash: parse_hex(&rec[0])?, d: num(1)?, k: num(2)?, m: num(3)?, total_samples: num(4)? });
    }
    Ok(out)
}

//! Spectral estimators of the shared representation.
//!
//! The replica and multigroup estimators run in two stages. Each client
//! reduces its raw samples to a handful of local average vectors
//! ([`ReplicaPair`], [`GroupAverages`]); the server only ever sees those
//! summaries and assembles the matrix whose leading subspace is returned.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pseudo_inverse;
use crate::model::{CovariateLaw, FederatedDataset, GroundTruth};
use crate::subspace::{top_k_singular_subspace, top_k_symmetric_eigenvectors, Side, SubspaceEstimate};

/// Relative singular-value cutoff for the pseudoinverse in [`lambda_operator`].
pub const PINV_TOL: f64 = 1e-10;

fn check_inputs(data: &FederatedDataset, k: usize) -> Result<()> {
    if k == 0 || k > data.d {
        return Err(Error::Dimension(format!("need 1 <= k <= d, got k={k} d={}", data.d)));
    }
    if data.num_clients() == 0 {
        return Err(Error::Dimension("dataset has no clients".into()));
    }
    if !data.all_finite() {
        return Err(Error::Numeric("dataset contains non-finite values".into()));
    }
    Ok(())
}

fn require_min_samples(data: &FederatedDataset, required: usize) -> Result<()> {
    match data.clients.iter().position(|c| c.len() < required) {
        Some(i) => Err(Error::InsufficientData {
            client: i,
            available: data.clients[i].len(),
            required,
        }),
        None => Ok(()),
    }
}

fn tagged(mut est: SubspaceEstimate, source: &str) -> SubspaceEstimate {
    est.source = source.to_string();
    est
}

// ---------------------------------------------------------------------------
// Replica estimator

/// Two independent local averages of `y x` over the first and second half of
/// a client's samples. Odd sample counts drop the final sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPair {
    pub first: DVector<f64>,
    pub second: DVector<f64>,
    /// Even number of samples actually used.
    pub effective_n: usize,
}

pub fn local_replica_averages(data: &FederatedDataset) -> Result<Vec<ReplicaPair>> {
    require_min_samples(data, 2)?;
    Ok(data
        .clients
        .par_iter()
        .map(|c| {
            let half = c.len() / 2;
            let scale = 1.0 / half as f64;
            ReplicaPair {
                first: c.cross_sum(0..half) * scale,
                second: c.cross_sum(half..2 * half) * scale,
                effective_n: 2 * half,
            }
        })
        .collect())
}

/// `Z = sum_i n_i zbar_i ztilde_i^T`
pub fn replica_matrix(pairs: &[ReplicaPair]) -> Result<DMatrix<f64>> {
    let d = pairs
        .first()
        .map(|p| p.first.len())
        .ok_or_else(|| Error::Dimension("no clients".into()))?;
    let mut z = DMatrix::zeros(d, d);
    for p in pairs {
        z.ger(p.effective_n as f64, &p.first, &p.second, 1.0);
    }
    Ok(z)
}

/// Top-k left singular subspace of the replica matrix.
pub fn estimator_replica(data: &FederatedDataset, k: usize) -> Result<SubspaceEstimate> {
    check_inputs(data, k)?;
    let z = replica_matrix(&local_replica_averages(data)?)?;
    Ok(tagged(top_k_singular_subspace(&z, k, Side::Left)?, "replica"))
}

// ---------------------------------------------------------------------------
// Multigroup (Z_g) estimator

/// Number of groups each client splits its data into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupSpec {
    Uniform(usize),
    PerClient(Vec<usize>),
    /// `g_i = n_i`: every sample is its own group.
    AllSamples,
}

/// Partition of each client's samples into `g_i` disjoint contiguous groups
/// of `floor(n_i / g_i)` samples; the remaining `n_i mod g_i` samples are unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub groups_per_client: Vec<usize>,
    pub group_sizes: Vec<usize>,
}

impl SplitPlan {
    pub fn new(partitions: &[usize], spec: &GroupSpec) -> Result<Self> {
        let groups: Vec<usize> = match spec {
            GroupSpec::Uniform(g) => vec![*g; partitions.len()],
            GroupSpec::PerClient(gs) => {
                if gs.len() != partitions.len() {
                    return Err(Error::Dimension(format!(
                        "group vector has {} entries, expected {}",
                        gs.len(),
                        partitions.len()
                    )));
                }
                gs.clone()
            }
            GroupSpec::AllSamples => partitions.to_vec(),
        };
        for (i, (&g, &n)) in groups.iter().zip(partitions).enumerate() {
            if g < 2 {
                return Err(Error::Config(format!("client {i}: need at least 2 groups, got {g}")));
            }
            if g > n {
                return Err(Error::Config(format!("client {i}: {g} groups exceed {n} samples")));
            }
        }
        let group_sizes = groups.iter().zip(partitions).map(|(&g, &n)| n / g).collect();
        Ok(Self { groups_per_client: groups, group_sizes })
    }

    /// Row ranges of the groups at client `i`.
    pub fn assignment(&self, i: usize) -> Vec<std::ops::Range<usize>> {
        let s = self.group_sizes[i];
        (0..self.groups_per_client[i]).map(|r| r * s..(r + 1) * s).collect()
    }
}

/// Group sums `sum_{j in G_r} y_j x_j / sqrt(|G_r|)` at one client.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAverages {
    pub averages: Vec<DVector<f64>>,
}

pub fn local_group_averages(data: &FederatedDataset, plan: &SplitPlan) -> Result<Vec<GroupAverages>> {
    if plan.groups_per_client.len() != data.num_clients() {
        return Err(Error::Dimension("split plan does not match client count".into()));
    }
    Ok(data
        .clients
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let scale = 1.0 / (plan.group_sizes[i] as f64).sqrt();
            GroupAverages {
                averages: plan.assignment(i).into_iter().map(|r| c.cross_sum(r) * scale).collect(),
            }
        })
        .collect())
}

/// `Z_g = sum_i (g_i (g_i - 1))^{-1/2} sum_{r != s} zbar_ir zbar_is^T`
pub fn multigroup_matrix(groups: &[GroupAverages]) -> Result<DMatrix<f64>> {
    let d = groups
        .first()
        .and_then(|g| g.averages.first())
        .map(|v| v.len())
        .ok_or_else(|| Error::Dimension("no group averages".into()))?;
    let mut z = DMatrix::zeros(d, d);
    for client in groups {
        let g = client.averages.len();
        if g < 2 {
            return Err(Error::Config("each client needs at least 2 groups".into()));
        }
        let weight = 1.0 / ((g * (g - 1)) as f64).sqrt();
        let total: DVector<f64> = client.averages.iter().fold(DVector::zeros(d), |acc, v| acc + v);
        // sum_{r != s} z_r z_s^T = (sum z)(sum z)^T - sum z_r z_r^T
        z.ger(weight, &total, &total, 1.0);
        for v in &client.averages {
            z.ger(-weight, v, v, 1.0);
        }
    }
    z.fill_upper_triangle_with_lower_triangle();
    Ok(z)
}

/// Top-k eigenvectors of `Z_g`.
pub fn estimator_multigroup(data: &FederatedDataset, k: usize, groups: &GroupSpec) -> Result<SubspaceEstimate> {
    check_inputs(data, k)?;
    let plan = SplitPlan::new(&data.partitions(), groups)?;
    let z = multigroup_matrix(&local_group_averages(data, &plan)?)?;
    Ok(tagged(top_k_symmetric_eigenvectors(&z, k)?, "multigroup"))
}

// ---------------------------------------------------------------------------
// Baselines

/// `Z_T = sum_ij y_ij^2 x_ij x_ij^T`
pub fn mom_matrix(data: &FederatedDataset) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(data.d, data.d);
    for c in &data.clients {
        let weighted = DMatrix::from_fn(c.len(), data.d, |j, col| c.x[(j, col)] * c.y[j] * c.y[j]);
        z.gemm_tr(1.0, &c.x, &weighted, 1.0);
    }
    (&z + z.transpose()) * 0.5
}

/// Method-of-moments estimator: top-k eigenvectors of `Z_T`.
pub fn estimator_mom(data: &FederatedDataset, k: usize) -> Result<SubspaceEstimate> {
    check_inputs(data, k)?;
    Ok(tagged(top_k_symmetric_eigenvectors(&mom_matrix(data), k)?, "mom"))
}

/// Client weights for the pairwise estimator.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PairwiseWeights {
    /// `w_i = 1 / M`
    #[default]
    Uniform,
    Explicit(Vec<f64>),
}

/// `Z_D = sum_i w_i / (n_i (n_i - 1)) sum_{j1 != j2} y_j1 y_j2 x_j1 x_j2^T`
pub fn pairwise_matrix(data: &FederatedDataset, weights: &PairwiseWeights) -> Result<DMatrix<f64>> {
    require_min_samples(data, 2)?;
    let m = data.num_clients();
    let w: Vec<f64> = match weights {
        PairwiseWeights::Uniform => vec![1.0 / m as f64; m],
        PairwiseWeights::Explicit(w) => {
            if w.len() != m {
                return Err(Error::Dimension(format!("{} weights for {m} clients", w.len())));
            }
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("pairwise weights must be positive".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(Error::Config(format!("pairwise weights sum to {sum}, expected 1")));
            }
            w.clone()
        }
    };
    let d = data.d;
    let mut z = DMatrix::zeros(d, d);
    for (c, &wi) in data.clients.iter().zip(&w) {
        let n = c.len() as f64;
        let scale = wi / (n * (n - 1.0));
        let s = c.x.tr_mul(&c.y);
        let squared = DMatrix::from_fn(c.len(), d, |j, col| c.x[(j, col)] * c.y[j] * c.y[j]);
        z.ger(scale, &s, &s, 1.0);
        z.gemm_tr(-scale, &c.x, &squared, 1.0);
    }
    Ok((&z + z.transpose()) * 0.5)
}

/// Top-k eigenvectors of `Z_D`.
pub fn estimator_pairwise(data: &FederatedDataset, k: usize, weights: &PairwiseWeights) -> Result<SubspaceEstimate> {
    check_inputs(data, k)?;
    Ok(tagged(top_k_symmetric_eigenvectors(&pairwise_matrix(data, weights)?, k)?, "pairwise"))
}

// ---------------------------------------------------------------------------
// Mean estimation

/// Top-k eigenvectors of `sum_i n_i ubar_i ubar_i^T`, which maximise
/// `sum_i n_i ubar_i^T B B^T ubar_i` over orthonormal `B`.
pub fn mean_estimation_pca(samples: &[Vec<DVector<f64>>], k: usize) -> Result<SubspaceEstimate> {
    let d = samples
        .iter()
        .flat_map(|c| c.first())
        .map(|v| v.len())
        .next()
        .ok_or_else(|| Error::Dimension("no samples".into()))?;
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    let mut s = DMatrix::zeros(d, d);
    for (i, client) in samples.iter().enumerate() {
        if client.is_empty() {
            return Err(Error::InsufficientData { client: i, available: 0, required: 1 });
        }
        if client.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension(format!("client {i} has vectors of the wrong length")));
        }
        let n = client.len() as f64;
        let mean = client.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n;
        s.ger(n, &mean, &mean, 1.0);
    }
    Ok(tagged(top_k_symmetric_eigenvectors(&s, k)?, "mean_pca"))
}

/// Objective maximised by [`mean_estimation_pca`].
pub fn mean_estimation_objective(samples: &[Vec<DVector<f64>>], basis: &DMatrix<f64>) -> f64 {
    samples
        .iter()
        .filter(|c| !c.is_empty())
        .map(|client| {
            let n = client.len() as f64;
            let mean = client.iter().fold(DVector::zeros(basis.nrows()), |acc, v| acc + v) / n;
            n * basis.tr_mul(&mean).norm_squared()
        })
        .sum()
}

/// `Lambda_i = Gamma^{-1} B (B^T Gamma^{-1} Gammahat Gamma^{-1} B)^+ B^T Gamma^{-1}`,
/// the matrix left after profiling `alpha_i` out of the client's least-squares loss.
pub fn lambda_operator(b: &DMatrix<f64>, gamma: &DMatrix<f64>, gamma_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = b.nrows();
    if gamma.shape() != (d, d) || gamma_hat.shape() != (d, d) {
        return Err(Error::Dimension("covariances must be d×d".into()));
    }
    let chol = gamma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Covariance("covariance is singular or not positive definite".into()))?;
    let g = chol.solve(b);
    let inner = g.tr_mul(&(gamma_hat * &g));
    let inner = (&inner + inner.transpose()) * 0.5;
    let pinv = pseudo_inverse(&inner, PINV_TOL)?;
    Ok(&g * pinv * g.transpose())
}

// ---------------------------------------------------------------------------
// Analytic expectations

fn effective_even(n: usize) -> usize {
    n - n % 2
}

/// `E[Z] = B* (sum_i n_i alpha_i alpha_i^T) B*^T`, with `n_i` rounded down to
/// the even count the replica split uses.
pub fn expected_replica_matrix(gt: &GroundTruth, partitions: &[usize]) -> Result<DMatrix<f64>> {
    if partitions.len() != gt.m {
        return Err(Error::Dimension(format!("{} partitions for M={}", partitions.len(), gt.m)));
    }
    let mut inner = DMatrix::zeros(gt.k, gt.k);
    for (i, &n) in partitions.iter().enumerate() {
        let a = gt.alphas.column(i);
        inner.ger(effective_even(n) as f64, &a, &a, 1.0);
    }
    Ok(&gt.b_star * inner * gt.b_star.transpose())
}

/// `E[sum_i n_i zhat_i zhat_i^T]` for the single full-sample average
/// `zhat_i = (1/n_i) sum_j y_ij x_ij` under Gaussian covariates:
/// `sum_i (n_i + 1) s_i s_i^T + (theta_i^T Gamma_i theta_i + sigma^2) Gamma_i`
/// with `s_i = Gamma_i theta_i = B* alpha_i`.
pub fn expected_single_average_matrix(
    gt: &GroundTruth,
    partitions: &[usize],
    law: CovariateLaw,
) -> Result<DMatrix<f64>> {
    if law != CovariateLaw::Gaussian {
        return Err(Error::Unsupported(
            "fourth moments are only available in closed form for Gaussian covariates".into(),
        ));
    }
    if partitions.len() != gt.m {
        return Err(Error::Dimension(format!("{} partitions for M={}", partitions.len(), gt.m)));
    }
    let d = gt.d;
    let sigma2 = gt.noise_sigma * gt.noise_sigma;
    let mut out = DMatrix::zeros(d, d);
    for (i, &n) in partitions.iter().enumerate() {
        let s = gt.signal_direction(i);
        let theta = gt.theta(i)?;
        let quad = theta.dot(&s);
        out.ger(n as f64 + 1.0, &s, &s, 1.0);
        out += gt.gammas[i].to_dense(d) * (quad + sigma2);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Named estimators

/// An estimator selectable by name, e.g. from a configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorKind {
    Replica,
    /// `Z_g` with a uniform group count.
    Multigroup(usize),
    /// `Z_g` with one group per sample.
    MultigroupAll,
    Mom,
    /// Pairwise estimator with `w_i = 1/M`.
    Pairwise,
}

impl EstimatorKind {
    pub fn estimate(&self, data: &FederatedDataset, k: usize) -> Result<SubspaceEstimate> {
        let mut est = match self {
            EstimatorKind::Replica => estimator_replica(data, k),
            EstimatorKind::Multigroup(g) => estimator_multigroup(data, k, &GroupSpec::Uniform(*g)),
            EstimatorKind::MultigroupAll => estimator_multigroup(data, k, &GroupSpec::AllSamples),
            EstimatorKind::Mom => estimator_mom(data, k),
            EstimatorKind::Pairwise => estimator_pairwise(data, k, &PairwiseWeights::Uniform),
        }?;
        est.source = self.to_string();
        Ok(est)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Replica => write!(f, "replica"),
            EstimatorKind::Multigroup(g) => write!(f, "multigroup:{g}"),
            EstimatorKind::MultigroupAll => write!(f, "multigroup:all"),
            EstimatorKind::Mom => write!(f, "mom"),
            EstimatorKind::Pairwise => write!(f, "pairwise"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "replica" => Ok(EstimatorKind::Replica),
            "mom" => Ok(EstimatorKind::Mom),
            "pairwise" => Ok(EstimatorKind::Pairwise),
            "multigroup:all" => Ok(EstimatorKind::MultigroupAll),
            other => match other.strip_prefix("multigroup:").map(str::parse::<usize>) {
                Some(Ok(g)) if g >= 2 => Ok(EstimatorKind::Multigroup(g)),
                _ => Err(Error::Config(format!("unknown estimator '{other}'"))),
            },
        }
    }
}

impl TryFrom<String> for EstimatorKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorKind> for String {
    fn from(k: EstimatorKind) -> String {
        k.to_string()
    }
}

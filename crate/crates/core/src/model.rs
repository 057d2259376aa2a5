//! Ground-truth parameters and synthetic federated datasets.
//!
//! Client `i` observes `y = x^T theta_i + noise` with `x ~ N(0, Gamma_i)` and
//! `Gamma_i theta_i = B* alpha_i`, so the cross-correlation `E[y x]` always
//! lies in the column space of `B*`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, orthonormalize};
use crate::rng::{derived_rng, rng_from_seed, stream};

pub const DEFAULT_ALPHA_BOUND: f64 = 4.0;
pub const DEFAULT_GAMMA_COND_BOUND: f64 = 10.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 1.0;

/// How client covariances are generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaProfile {
    #[default]
    Identity,
    /// Diagonal entries drawn log-uniformly in `[1/sqrt(cond), sqrt(cond)]`.
    Diagonal { cond: f64 },
    /// `Q diag(lambda) Q^T` with a Haar-random `Q` and log-uniform spectrum.
    Dense { cond: f64 },
}

/// How the client heads `alpha_i` are generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaScheme {
    /// i.i.d. `N(0, I_k / k)`, resampled while the norm exceeds the bound.
    #[default]
    Gaussian,
    /// `alpha_i = e_{i mod k}`.
    Basis,
    /// Columns of a user-supplied k×M matrix, given client by client.
    Explicit { columns: Vec<Vec<f64>> },
}

/// Distribution of the whitened covariate before the covariance factor is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    #[default]
    Gaussian,
    /// Bounded sub-gaussian covariates: independent ±1 entries.
    Rademacher,
}

/// A client covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Identity,
    Diagonal(DVector<f64>),
    Dense {
        matrix: DMatrix<f64>,
        /// Lower Cholesky factor.
        factor: DMatrix<f64>,
    },
}

impl Covariance {
    pub fn diagonal(entries: DVector<f64>) -> Result<Self> {
        if entries.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Covariance("diagonal covariance must be positive".into()));
        }
        Ok(Covariance::Diagonal(entries))
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !crate::linalg::is_symmetric(&matrix, 1e-10 * crate::linalg::max_abs(&matrix).max(1.0)) {
            return Err(Error::Covariance("covariance is not symmetric".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Covariance("covariance is not positive definite".into()))?;
        Ok(Covariance::Dense { matrix: sym, factor: chol.l() })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Covariance::Identity)
    }

    pub fn to_dense(&self, d: usize) -> DMatrix<f64> {
        match self {
            Covariance::Identity => DMatrix::identity(d, d),
            Covariance::Diagonal(v) => DMatrix::from_diagonal(v),
            Covariance::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `Gamma v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Identity => v.clone(),
            Covariance::Diagonal(g) => g.component_mul(v),
            Covariance::Dense { matrix, .. } => matrix * v,
        }
    }

    /// `Gamma^{-1} v`
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Covariance::Identity => Ok(v.clone()),
            Covariance::Diagonal(g) => Ok(v.component_div(g)),
            Covariance::Dense { factor, .. } => factor
                .solve_lower_triangular(v)
                .and_then(|w| factor.tr_solve_lower_triangular(&w))
                .ok_or_else(|| Error::Covariance("singular covariance".into())),
        }
    }

    pub fn condition_number(&self) -> f64 {
        match self {
            Covariance::Identity => 1.0,
            Covariance::Diagonal(g) => g.max() / g.min(),
            Covariance::Dense { matrix, .. } => {
                let ev = matrix.clone().symmetric_eigenvalues();
                ev.max() / ev.min()
            }
        }
    }

    /// Maps a whitened draw `w` to `Gamma^{1/2} w`.
    fn colour(&self, white: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Identity => white.clone(),
            Covariance::Diagonal(g) => g.map(f64::sqrt).component_mul(white),
            Covariance::Dense { factor, .. } => factor * white,
        }
    }
}

/// Generative parameters of a problem instance.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    /// Orthonormal d×k basis of the shared representation.
    pub b_star: DMatrix<f64>,
    /// k×M matrix whose columns are the client heads.
    pub alphas: DMatrix<f64>,
    pub gammas: Vec<Covariance>,
    pub noise_sigma: f64,
}

/// Everything needed to draw a [`GroundTruth`] besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    #[serde(default)]
    pub gamma: GammaProfile,
    #[serde(default)]
    pub alpha: AlphaScheme,
    #[serde(default = "default_alpha_bound")]
    pub alpha_bound: f64,
    #[serde(default = "default_gamma_cond_bound")]
    pub gamma_cond_bound: f64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

fn default_alpha_bound() -> f64 {
    DEFAULT_ALPHA_BOUND
}
fn default_gamma_cond_bound() -> f64 {
    DEFAULT_GAMMA_COND_BOUND
}
fn default_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

impl GroundTruthSpec {
    pub fn new(d: usize, k: usize, m: usize) -> Self {
        Self {
            d,
            k,
            m,
            gamma: GammaProfile::Identity,
            alpha: AlphaScheme::Gaussian,
            alpha_bound: DEFAULT_ALPHA_BOUND,
            gamma_cond_bound: DEFAULT_GAMMA_COND_BOUND,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }

    pub fn with_gamma(mut self, gamma: GammaProfile) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_alpha(mut self, alpha: AlphaScheme) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 || self.k > self.d {
            return Err(Error::Dimension(format!(
                "need 1 <= k <= d, got k={} d={}",
                self.k, self.d
            )));
        }
        if self.m < self.k {
            return Err(Error::Dimension(format!(
                "need M >= k, got M={} k={}",
                self.m, self.k
            )));
        }
        if !(self.alpha_bound > 0.0) {
            return Err(Error::Config("alpha_bound must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config("noise sigma must be finite and non-negative".into()));
        }
        match self.gamma {
            GammaProfile::Identity => {}
            GammaProfile::Diagonal { cond } | GammaProfile::Dense { cond } => {
                if !(cond >= 1.0) || !cond.is_finite() {
                    return Err(Error::Config(format!("covariance condition {cond} must be >= 1")));
                }
                if cond > self.gamma_cond_bound {
                    return Err(Error::Config(format!(
                        "covariance condition {cond} exceeds bound {}",
                        self.gamma_cond_bound
                    )));
                }
            }
        }
        Ok(())
    }
}

impl GroundTruth {
    /// Draws a ground truth. Identical `(spec, seed)` pairs give bit-identical output.
    pub fn generate(spec: &GroundTruthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (d, k, m) = (spec.d, spec.k, spec.m);

        let mut basis_rng = derived_rng(&[seed, stream::GROUND_TRUTH, 0]);
        let b_star = orthonormalize(&gaussian_matrix(&mut basis_rng, d, k));

        let mut alpha_rng = derived_rng(&[seed, stream::GROUND_TRUTH, 1]);
        let alphas = match &spec.alpha {
            AlphaScheme::Gaussian => {
                let scale = 1.0 / (k as f64).sqrt();
                let mut a = DMatrix::zeros(k, m);
                for i in 0..m {
                    loop {
                        let v = gaussian_vector(&mut alpha_rng, k) * scale;
                        if v.norm() <= spec.alpha_bound {
                            a.set_column(i, &v);
                            break;
                        }
                    }
                }
                a
            }
            AlphaScheme::Basis => DMatrix::from_fn(k, m, |r, c| if c % k == r { 1.0 } else { 0.0 }),
            AlphaScheme::Explicit { columns } => {
                if columns.len() != m || columns.iter().any(|c| c.len() != k) {
                    return Err(Error::Dimension(format!(
                        "explicit alphas must be {m} columns of length {k}"
                    )));
                }
                let a = DMatrix::from_fn(k, m, |r, c| columns[c][r]);
                if let Some(i) = (0..m).find(|&i| a.column(i).norm() > spec.alpha_bound) {
                    return Err(Error::Config(format!(
                        "alpha_{i} has norm above bound {}",
                        spec.alpha_bound
                    )));
                }
                a
            }
        };

        let mut gamma_rng = derived_rng(&[seed, stream::GROUND_TRUTH, 2]);
        let gammas = (0..m)
            .map(|_| draw_covariance(&spec.gamma, d, &mut gamma_rng))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self { d, k, m, b_star, alphas, gammas, noise_sigma: spec.noise_sigma })
    }

    pub fn alpha(&self, i: usize) -> DVector<f64> {
        self.alphas.column(i).into_owned()
    }

    /// `Gamma_i theta_i = B* alpha_i`
    pub fn signal_direction(&self, i: usize) -> DVector<f64> {
        &self.b_star * self.alphas.column(i)
    }

    /// `theta_i = Gamma_i^{-1} B* alpha_i`
    pub fn theta(&self, i: usize) -> Result<DVector<f64>> {
        self.gammas[i].solve(&self.signal_direction(i))
    }

    pub fn all_identity_covariances(&self) -> bool {
        self.gammas.iter().all(Covariance::is_identity)
    }
}

fn draw_covariance<R: Rng + ?Sized>(profile: &GammaProfile, d: usize, rng: &mut R) -> Result<Covariance> {
    let log_uniform = |rng: &mut R, cond: f64| {
        let half = 0.5 * cond.ln();
        let u: f64 = rng.random_range(-half..=half);
        u.exp()
    };
    match *profile {
        GammaProfile::Identity => Ok(Covariance::Identity),
        GammaProfile::Diagonal { cond } => {
            let entries = DVector::from_fn(d, |_, _| log_uniform(rng, cond));
            Covariance::diagonal(entries)
        }
        GammaProfile::Dense { cond } => {
            let q = orthonormalize(&gaussian_matrix(rng, d, d));
            let spectrum = DVector::from_fn(d, |_, _| log_uniform(rng, cond));
            let m = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
            Covariance::dense((&m + m.transpose()) * 0.5)
        }
    }
}

/// Free-function form of [`GroundTruth::generate`] with default bounds and unit noise.
pub fn generate_ground_truth(
    d: usize,
    k: usize,
    m: usize,
    gamma: GammaProfile,
    alpha: AlphaScheme,
    seed: u64,
) -> Result<GroundTruth> {
    let spec = GroundTruthSpec::new(d, k, m).with_gamma(gamma).with_alpha(alpha);
    GroundTruth::generate(&spec, seed)
}

/// How per-client sample counts are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionScheme {
    Equal { n: usize },
    /// Each `n_i` uniform on the integers `[lo, hi]`.
    Uniform { lo: usize, hi: usize },
    Explicit { sizes: Vec<usize> },
}

pub fn sample_partitions(scheme: &PartitionScheme, m: usize, seed: u64) -> Result<Vec<usize>> {
    match scheme {
        PartitionScheme::Equal { n } => {
            if *n == 0 {
                return Err(Error::Config("partition size must be at least 1".into()));
            }
            Ok(vec![*n; m])
        }
        PartitionScheme::Uniform { lo, hi } => {
            if *lo == 0 || lo > hi {
                return Err(Error::Config(format!("invalid uniform range [{lo}, {hi}]")));
            }
            let mut rng = derived_rng(&[seed, stream::PARTITIONS]);
            Ok((0..m).map(|_| rng.random_range(*lo..=*hi)).collect())
        }
        PartitionScheme::Explicit { sizes } => {
            if sizes.len() != m {
                return Err(Error::Dimension(format!(
                    "explicit partition has {} entries, expected {m}",
                    sizes.len()
                )));
            }
            if sizes.contains(&0) {
                return Err(Error::Config("partition sizes must be at least 1".into()));
            }
            Ok(sizes.clone())
        }
    }
}

/// Samples held by one client: rows of `x` are covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl ClientData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "client has {} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `sum_j y_j x_j` over the half-open row range.
    pub(crate) fn cross_sum(&self, rows: std::ops::Range<usize>) -> DVector<f64> {
        let len = rows.len();
        let xs = self.x.rows(rows.start, len);
        let ys = self.y.rows(rows.start, len);
        xs.tr_mul(&ys)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub d: usize,
    pub clients: Vec<ClientData>,
}

impl FederatedDataset {
    pub fn new(d: usize, clients: Vec<ClientData>) -> Result<Self> {
        for (i, c) in clients.iter().enumerate() {
            if c.x.ncols() != d {
                return Err(Error::Dimension(format!(
                    "client {i} has {} columns, expected {d}",
                    c.x.ncols()
                )));
            }
            if c.is_empty() {
                return Err(Error::InsufficientData { client: i, available: 0, required: 1 });
            }
        }
        Ok(Self { d, clients })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn partitions(&self) -> Vec<usize> {
        self.clients.iter().map(ClientData::len).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(ClientData::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.clients
            .iter()
            .all(|c| c.x.iter().all(|v| v.is_finite()) && c.y.iter().all(|v| v.is_finite()))
    }

    /// Seeded within-client permutation of the samples. The replica split is
    /// positional, so externally supplied data in a non-random order should
    /// be shuffled first.
    pub fn shuffled(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let clients = self
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut perm: Vec<usize> = (0..c.len()).collect();
                perm.shuffle(&mut derived_rng(&[seed, stream::SHUFFLE, i as u64]));
                ClientData {
                    x: DMatrix::from_fn(c.len(), self.d, |r, col| c.x[(perm[r], col)]),
                    y: DVector::from_fn(c.len(), |r, _| c.y[perm[r]]),
                }
            })
            .collect();
        Self { d: self.d, clients }
    }
}

fn draw_white<R: Rng + ?Sized>(rng: &mut R, d: usize, law: CovariateLaw) -> DVector<f64> {
    match law {
        CovariateLaw::Gaussian => DVector::from_fn(d, |_, _| rng.sample(StandardNormal)),
        CovariateLaw::Rademacher => {
            DVector::from_fn(d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
    }
}

fn check_partitions(gt: &GroundTruth, partitions: &[usize]) -> Result<()> {
    if partitions.len() != gt.m {
        return Err(Error::Dimension(format!(
            "partition vector has {} entries, expected M={}",
            partitions.len(),
            gt.m
        )));
    }
    if let Some(i) = partitions.iter().position(|&n| n == 0) {
        return Err(Error::InsufficientData { client: i, available: 0, required: 1 });
    }
    Ok(())
}

/// Linear-model dataset with Gaussian covariates.
pub fn sample_dataset(gt: &GroundTruth, partitions: &[usize], seed: u64) -> Result<FederatedDataset> {
    sample_dataset_with_law(gt, partitions, CovariateLaw::Gaussian, seed)
}

/// Linear-model dataset with a chosen whitened covariate law.
pub fn sample_dataset_with_law(
    gt: &GroundTruth,
    partitions: &[usize],
    law: CovariateLaw,
    seed: u64,
) -> Result<FederatedDataset> {
    check_partitions(gt, partitions)?;
    let mut rng = rng_from_seed(seed);
    let mut clients = Vec::with_capacity(gt.m);
    for (i, &n) in partitions.iter().enumerate() {
        let theta = gt.theta(i)?;
        let cov = &gt.gammas[i];
        let mut x = DMatrix::zeros(n, gt.d);
        let mut y = DVector::zeros(n);
        for j in 0..n {
            let row = cov.colour(&draw_white(&mut rng, gt.d, law));
            let noise: f64 = rng.sample(StandardNormal);
            y[j] = row.dot(&theta) + gt.noise_sigma * noise;
            x.set_row(j, &row.transpose());
        }
        clients.push(ClientData { x, y });
    }
    FederatedDataset::new(gt.d, clients)
}

/// Response model `E[y | x] = h_i(B*^T x)`.
#[derive(Clone)]
pub enum LinkSpec {
    Linear,
    /// `y ~ Bernoulli(1 / (1 + exp(-x^T B* alpha_i)))`
    Logistic,
    /// `y = max(0, B*^T x)^T head + noise`; `head` defaults to `alpha_i`.
    ReluNetwork { head_weights: Option<DVector<f64>> },
    /// `y = f(x^T B* alpha_i) + noise` for a Lipschitz `f`.
    CustomLipschitz {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz_bound: f64,
    },
}

impl fmt::Debug for LinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkSpec::Linear => write!(f, "Linear"),
            LinkSpec::Logistic => write!(f, "Logistic"),
            LinkSpec::ReluNetwork { head_weights } => {
                f.debug_struct("ReluNetwork").field("head_weights", head_weights).finish()
            }
            LinkSpec::CustomLipschitz { lipschitz_bound, .. } => f
                .debug_struct("CustomLipschitz")
                .field("lipschitz_bound", lipschitz_bound)
                .finish_non_exhaustive(),
        }
    }
}

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Dataset from a possibly nonlinear teacher. Nonlinear links need
/// identity covariances.
pub fn sample_nonlinear_dataset(
    gt: &GroundTruth,
    link: &LinkSpec,
    partitions: &[usize],
    seed: u64,
) -> Result<FederatedDataset> {
    if matches!(link, LinkSpec::Linear) {
        return sample_dataset(gt, partitions, seed);
    }
    if !gt.all_identity_covariances() {
        return Err(Error::Config(
            "nonlinear links require identity covariances".into(),
        ));
    }
    check_partitions(gt, partitions)?;
    match link {
        LinkSpec::ReluNetwork { head_weights: Some(h) } if h.len() != gt.k => {
            return Err(Error::Dimension(format!(
                "ReLU head has length {}, expected k={}",
                h.len(),
                gt.k
            )));
        }
        LinkSpec::CustomLipschitz { lipschitz_bound, .. }
            if !(*lipschitz_bound > 0.0) || !lipschitz_bound.is_finite() =>
        {
            return Err(Error::Config("Lipschitz bound must be positive".into()));
        }
        _ => {}
    }

    let mut rng = rng_from_seed(seed);
    let mut clients = Vec::with_capacity(gt.m);
    for (i, &n) in partitions.iter().enumerate() {
        let alpha = gt.alpha(i);
        let theta = &gt.b_star * &alpha;
        let mut x = DMatrix::zeros(n, gt.d);
        let mut y = DVector::zeros(n);
        for j in 0..n {
            let row = draw_white(&mut rng, gt.d, CovariateLaw::Gaussian);
            y[j] = match link {
                LinkSpec::Linear => unreachable!(),
                LinkSpec::Logistic => {
                    let p = logistic(row.dot(&theta));
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                LinkSpec::ReluNetwork { head_weights } => {
                    let hidden = gt.b_star.tr_mul(&row).map(|v| v.max(0.0));
                    let head = head_weights.as_ref().unwrap_or(&alpha);
                    let noise: f64 = rng.sample(StandardNormal);
                    hidden.dot(head) + gt.noise_sigma * noise
                }
                LinkSpec::CustomLipschitz { f, .. } => {
                    let noise: f64 = rng.sample(StandardNormal);
                    f(row.dot(&theta)) + gt.noise_sigma * noise
                }
            };
            x.set_row(j, &row.transpose());
        }
        clients.push(ClientData { x, y });
    }
    FederatedDataset::new(gt.d, clients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn square_basis_is_orthogonal() {
        let gt = generate_ground_truth(2, 2, 2, GammaProfile::Identity, AlphaScheme::Basis, 11).unwrap();
        let gram = gt.b_star.transpose() * &gt.b_star;
        assert!(max_abs(&(gram - DMatrix::identity(2, 2))) <= 1e-10);
        for i in 0..2 {
            let theta = gt.theta(i).unwrap();
            assert!((theta - gt.b_star.column(i)).norm() < 1e-15);
        }
    }

    #[test]
    fn orthonormality_cross_checked_by_elementwise_gram() {
        let gt = generate_ground_truth(8, 2, 50, GammaProfile::Identity, AlphaScheme::Gaussian, 7).unwrap();
        // Independent route: explicit dot products of column pairs.
        let mut worst = 0.0_f64;
        for a in 0..2 {
            for b in 0..2 {
                let dot: f64 = (0..8).map(|r| gt.b_star[(r, a)] * gt.b_star[(r, b)]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        assert!(worst <= 1e-10);
    }

    #[test]
    fn full_scale_ground_truth_shapes() {
        let gt = generate_ground_truth(120, 10, 1000, GammaProfile::Identity, AlphaScheme::Gaussian, 1).unwrap();
        assert_eq!(gt.b_star.shape(), (120, 10));
        assert_eq!(gt.alphas.shape(), (10, 1000));
        assert!((0..1000).all(|i| gt.alphas.column(i).norm() <= DEFAULT_ALPHA_BOUND));
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(matches!(
            generate_ground_truth(3, 4, 10, GammaProfile::Identity, AlphaScheme::Gaussian, 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            generate_ground_truth(5, 3, 2, GammaProfile::Identity, AlphaScheme::Gaussian, 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            generate_ground_truth(5, 0, 2, GammaProfile::Identity, AlphaScheme::Gaussian, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn covariance_condition_bound_enforced() {
        let r = generate_ground_truth(5, 2, 4, GammaProfile::Diagonal { cond: 50.0 }, AlphaScheme::Gaussian, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        for profile in [GammaProfile::Diagonal { cond: 10.0 }, GammaProfile::Dense { cond: 10.0 }] {
            let gt = generate_ground_truth(6, 2, 5, profile, AlphaScheme::Gaussian, 3).unwrap();
            for g in &gt.gammas {
                assert!(g.condition_number() <= 10.0 + 1e-9);
                assert!(!g.is_identity());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GroundTruthSpec::new(10, 3, 20).with_gamma(GammaProfile::Dense { cond: 4.0 });
        let a = GroundTruth::generate(&spec, 99).unwrap();
        let b = GroundTruth::generate(&spec, 99).unwrap();
        assert_eq!(a.b_star, b.b_star);
        assert_eq!(a.alphas, b.alphas);
        assert_eq!(a.gammas, b.gammas);
        let p = vec![5; 20];
        assert_eq!(sample_dataset(&a, &p, 4).unwrap(), sample_dataset(&b, &p, 4).unwrap());
    }

    #[test]
    fn partition_schemes() {
        assert_eq!(sample_partitions(&PartitionScheme::Equal { n: 60 }, 1000, 0).unwrap(), vec![60; 1000]);
        let u = sample_partitions(&PartitionScheme::Uniform { lo: 2, hi: 118 }, 1000, 5).unwrap();
        assert_eq!(u.len(), 1000);
        assert!(u.iter().all(|&n| (2..=118).contains(&n)));
        let e = PartitionScheme::Explicit { sizes: vec![3, 5, 7] };
        assert_eq!(sample_partitions(&e, 3, 0).unwrap(), vec![3, 5, 7]);
        assert!(matches!(sample_partitions(&e, 4, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn noiseless_identity_is_exact() {
        let spec = GroundTruthSpec::new(6, 2, 4).with_noise(0.0);
        let gt = GroundTruth::generate(&spec, 1).unwrap();
        let data = sample_dataset(&gt, &[3, 4, 5, 6], 2).unwrap();
        for (i, c) in data.clients.iter().enumerate() {
            let pred = &c.x * &gt.b_star * gt.alpha(i);
            assert!((pred - &c.y).amax() <= 1e-10);
        }
    }

    #[test]
    fn rademacher_law_is_bounded() {
        let spec = GroundTruthSpec::new(5, 1, 2);
        let gt = GroundTruth::generate(&spec, 1).unwrap();
        let data = sample_dataset_with_law(&gt, &[10, 10], CovariateLaw::Rademacher, 3).unwrap();
        assert!(data.clients[0].x.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn nonlinear_links_require_identity_covariance() {
        let spec = GroundTruthSpec::new(5, 2, 3).with_gamma(GammaProfile::Diagonal { cond: 2.0 });
        let gt = GroundTruth::generate(&spec, 1).unwrap();
        let r = sample_nonlinear_dataset(&gt, &LinkSpec::Logistic, &[4, 4, 4], 0);
        assert!(matches!(r, Err(Error::Config(_))));
        // Linear link falls through to the ordinary sampler.
        assert!(sample_nonlinear_dataset(&gt, &LinkSpec::Linear, &[4, 4, 4], 0).is_ok());
    }

    #[test]
    fn logistic_responses_are_binary() {
        let gt = GroundTruth::generate(&GroundTruthSpec::new(6, 2, 3), 4).unwrap();
        let data = sample_nonlinear_dataset(&gt, &LinkSpec::Logistic, &[50, 50, 50], 1).unwrap();
        for c in &data.clients {
            assert!(c.y.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        assert_eq!(logistic(0.0), 0.5);
    }

    #[test]
    fn relu_with_zero_head_is_pure_noise() {
        let spec = GroundTruthSpec::new(6, 2, 2).with_alpha(AlphaScheme::Explicit {
            columns: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        });
        let gt = GroundTruth::generate(&spec, 4).unwrap();
        let link = LinkSpec::ReluNetwork { head_weights: None };
        let data = sample_nonlinear_dataset(&gt, &link, &[2000, 10], 1).unwrap();
        let y = &data.clients[0].y;
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 0.1);
        assert!((var - 1.0).abs() < 0.1);
        // Covariates do not enter the response.
        let corr = data.clients[0].x.tr_mul(y) / y.len() as f64;
        assert!(corr.amax() < 0.12);
    }

    #[test]
    fn wrong_partition_length_rejected() {
        let gt = GroundTruth::generate(&GroundTruthSpec::new(4, 1, 3), 0).unwrap();
        assert!(matches!(sample_dataset(&gt, &[2, 2], 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn shuffle_permutes_rows_together() {
        let gt = GroundTruth::generate(&GroundTruthSpec::new(3, 1, 2), 1).unwrap();
        let data = sample_dataset(&gt, &[6, 4], 2).unwrap();
        let a = data.shuffled(7);
        assert_eq!(a, data.shuffled(7));
        assert_ne!(a, data);
        for (c, s) in data.clients.iter().zip(&a.clients) {
            for r in 0..s.len() {
                let orig = (0..c.len()).find(|&j| c.y[j] == s.y[r]).unwrap();
                assert_eq!(c.x.row(orig), s.x.row(r));
            }
        }
    }
}

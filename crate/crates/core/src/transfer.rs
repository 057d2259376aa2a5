//! Fitting a new client on top of a learned representation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, gaussian_vector, min_norm_lstsq};
use crate::rng::{derived_rng, stream};
use crate::subspace::{validate_orthonormal, SubspaceEstimate, INPUT_ORTHO_TOL};

const LSTSQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMethod {
    Projected,
    PrivateProjected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_bound: f64,
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.epsilon.is_nan() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.clip_bound > 0.0) || !self.clip_bound.is_finite() {
            return Err(Error::Config(format!("clip bound must be positive, got {}", self.clip_bound)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyRecord {
    pub params: PrivacyParams,
    /// Standard deviation of the Gaussian noise added to each coordinate of `alpha_hat`.
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEstimate {
    pub alpha_hat: DVector<f64>,
    /// `basis * alpha_hat`
    pub theta_hat: DVector<f64>,
    pub method: TransferMethod,
    pub privacy: Option<PrivacyRecord>,
    /// Fewer samples than representation dimensions; the minimum-norm head was returned.
    pub underdetermined: bool,
}

fn check_client(basis: &DMatrix<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    validate_orthonormal(basis, INPUT_ORTHO_TOL)?;
    if x.ncols() != basis.nrows() {
        return Err(Error::Dimension(format!(
            "client covariates have {} columns, basis has {} rows",
            x.ncols(),
            basis.nrows()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows but {} responses", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData { client: 0, available: 0, required: 1 });
    }
    if !(all_finite(x) && y.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric("client data contains non-finite values".into()));
    }
    Ok(())
}

/// Least-squares head `argmin_a ||X B a - y||` on the projected n×k design,
/// minimum-norm when the projected design is rank deficient.
pub fn fit_new_client(b_hat: &SubspaceEstimate, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<TransferEstimate> {
    let basis = &b_hat.basis;
    check_client(basis, x, y)?;
    let projected = x * basis;
    let alpha_hat = min_norm_lstsq(&projected, y, LSTSQ_TOL)?;
    let underdetermined = x.nrows() < basis.ncols();
    if underdetermined {
        log::warn!(
            "new client has {} samples for a {}-dimensional head; returning the minimum-norm fit",
            x.nrows(),
            basis.ncols()
        );
    }
    Ok(TransferEstimate {
        theta_hat: basis * &alpha_hat,
        alpha_hat,
        method: TransferMethod::Projected,
        privacy: None,
        underdetermined,
    })
}

/// Ordinary least squares over all `d` coordinates (minimum-norm when `n < d`).
pub fn independent_baseline(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData { client: 0, available: 0, required: 1 });
    }
    min_norm_lstsq(x, y, LSTSQ_TOL)
}

/// Noise standard deviation of the Gaussian mechanism for a statistic with
/// L2 sensitivity `clip_bound / n`.
pub fn gaussian_noise_scale(clip_bound: f64, n: usize, epsilon: f64, delta: f64) -> f64 {
    clip_bound * (2.0 * (1.25 / delta).ln()).sqrt() / (n as f64 * epsilon)
}

/// Head fitted from per-sample contributions `u_j y_j` (with `u_j = B^T x_j`)
/// clipped to `clip_bound` in L2 norm: `alpha = (U^T U)^+ sum_j clip(u_j y_j)`.
/// This is the noiseless part of [`private_fit_new_client`].
pub fn clipped_fit_new_client(
    b_hat: &SubspaceEstimate,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    clip_bound: f64,
) -> Result<DVector<f64>> {
    if !(clip_bound > 0.0) || !clip_bound.is_finite() {
        return Err(Error::Config("clip bound must be positive and finite".into()));
    }
    let basis = &b_hat.basis;
    check_client(basis, x, y)?;
    let projected = x * basis;
    let mut moment = DVector::zeros(basis.ncols());
    for j in 0..x.nrows() {
        let mut g = projected.row(j).transpose() * y[j];
        let norm = g.norm();
        if norm > clip_bound {
            g *= clip_bound / norm;
        }
        moment += g;
    }
    let gram = projected.tr_mul(&projected);
    min_norm_lstsq(&gram, &moment, LSTSQ_TOL)
}

/// Differentially private head via output perturbation.
///
/// The clipped fit of [`clipped_fit_new_client`] plus Gaussian noise with
/// [`gaussian_noise_scale`] in the k-dimensional head space. The calibration
/// treats the projected Gram matrix `U^T U / n` as the identity, which holds
/// for isotropic covariates and an orthonormal basis.
pub fn private_fit_new_client(
    b_hat: &SubspaceEstimate,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &PrivacyParams,
    seed: u64,
) -> Result<TransferEstimate> {
    params.validate()?;
    let mut alpha_hat = clipped_fit_new_client(b_hat, x, y, params.clip_bound)?;
    let (n, k) = (x.nrows(), b_hat.basis.ncols());
    let noise_scale = gaussian_noise_scale(params.clip_bound, n, params.epsilon, params.delta);
    let mut rng = derived_rng(&[seed, stream::PRIVACY]);
    alpha_hat += gaussian_vector(&mut rng, k) * noise_scale;

    Ok(TransferEstimate {
        theta_hat: &b_hat.basis * &alpha_hat,
        alpha_hat,
        method: TransferMethod::PrivateProjected,
        privacy: Some(PrivacyRecord { params: *params, noise_scale }),
        underdetermined: n < k,
    })
}

//! Orthonormal-subspace utilities: principal angle distance, top-k singular
//! subspaces and the Wedin perturbation bound.

use nalgebra::{DMatrix, SVD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, gaussian_matrix, max_abs, orthonormalize, symmetric_eigen_desc};

/// Tolerance for validating orthonormal inputs.
pub const INPUT_ORTHO_TOL: f64 = 1e-6;
/// Tolerance guaranteed on orthonormal outputs.
pub const OUTPUT_ORTHO_TOL: f64 = 1e-8;
/// Singular-value gap at or below which the top-k subspace is reported non-unique.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// An orthonormal d×k basis estimating the shared representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    pub basis: DMatrix<f64>,
    pub source: String,
    /// Set when the k-th and (k+1)-th singular values coincide, so the
    /// subspace is not uniquely determined by the input matrix.
    pub degenerate_gap: bool,
    /// Leading singular values (or eigenvalues) of the matrix the basis came from.
    pub spectrum: Vec<f64>,
}

impl SubspaceEstimate {
    pub fn new(basis: DMatrix<f64>, source: impl Into<String>) -> Result<Self> {
        validate_orthonormal(&basis, OUTPUT_ORTHO_TOL)?;
        Ok(Self { basis, source: source.into(), degenerate_gap: false, spectrum: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.basis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Left,
    Right,
}

pub fn orthonormality_error(b: &DMatrix<f64>) -> f64 {
    let k = b.ncols();
    max_abs(&(b.tr_mul(b) - DMatrix::identity(k, k)))
}

pub fn validate_orthonormal(b: &DMatrix<f64>, tol: f64) -> Result<()> {
    if b.ncols() == 0 || b.ncols() > b.nrows() {
        return Err(Error::Dimension(format!("basis must be d×k with 1 <= k <= d, got {:?}", b.shape())));
    }
    let err = orthonormality_error(b);
    if !(err <= tol) {
        return Err(Error::Validation(format!("basis columns not orthonormal (max error {err:.3e})")));
    }
    Ok(())
}

/// `||B B^T - B' B'^T||_2` for two d×k orthonormal bases.
///
/// Computed as the largest singular value of `(I - B B^T) B'`, which equals
/// the projector-difference norm when both subspaces have the same dimension
/// and stays accurate for nearly identical subspaces.
pub fn principal_angle_distance(b: &DMatrix<f64>, b_prime: &DMatrix<f64>) -> Result<f64> {
    if b.shape() != b_prime.shape() {
        return Err(Error::Dimension(format!(
            "bases have shapes {:?} and {:?}",
            b.shape(),
            b_prime.shape()
        )));
    }
    validate_orthonormal(b, INPUT_ORTHO_TOL)?;
    validate_orthonormal(b_prime, INPUT_ORTHO_TOL)?;
    let dist = sine_norm(b, b_prime).max(sine_norm(b_prime, b));
    Ok(dist.clamp(0.0, 1.0))
}

fn sine_norm(b: &DMatrix<f64>, b_prime: &DMatrix<f64>) -> f64 {
    let residual = b_prime - b * b.tr_mul(b_prime);
    SVD::new(residual, false, false).singular_values.max()
}

/// Top-k singular vectors of `z` from the requested side, ordered by
/// descending singular value.
pub fn top_k_singular_subspace(z: &DMatrix<f64>, k: usize, side: Side) -> Result<SubspaceEstimate> {
    if !z.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {:?}", z.shape())));
    }
    let d = z.nrows();
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    if !all_finite(z) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let svd = SVD::new(z.clone(), side == Side::Left, side == Side::Right);
    let vectors = match side {
        Side::Left => svd.u.as_ref().unwrap().columns(0, k).into_owned(),
        Side::Right => svd.v_t.as_ref().unwrap().rows(0, k).transpose(),
    };
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let degenerate_gap = gap_is_degenerate(&sv, k);
    let basis = reorthonormalize(vectors);
    Ok(SubspaceEstimate {
        basis,
        source: String::new(),
        degenerate_gap,
        spectrum: sv.into_iter().take(k + usize::from(k < d)).collect(),
    })
}

/// Top-k eigenvectors of a symmetric matrix.
pub fn top_k_symmetric_eigenvectors(s: &DMatrix<f64>, k: usize) -> Result<SubspaceEstimate> {
    let d = s.nrows();
    if !s.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {:?}", s.shape())));
    }
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    if !all_finite(s) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let sym = (s + s.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen_desc(&sym);
    let degenerate_gap = gap_is_degenerate(&values, k);
    let basis = reorthonormalize(vectors.columns(0, k).into_owned());
    Ok(SubspaceEstimate {
        basis,
        source: String::new(),
        degenerate_gap,
        spectrum: values.into_iter().take(k + usize::from(k < d)).collect(),
    })
}

fn gap_is_degenerate(sorted_desc: &[f64], k: usize) -> bool {
    let scale = sorted_desc.first().map_or(1.0, |v| v.abs().max(1.0));
    match sorted_desc.get(k) {
        Some(&next) => (sorted_desc[k - 1] - next).abs() <= DEGENERATE_GAP * scale,
        None => false,
    }
}

// One Gram-Schmidt pass through QR cleans up rounding from the decomposition
// while preserving the span and column signs.
fn reorthonormalize(v: DMatrix<f64>) -> DMatrix<f64> {
    if orthonormality_error(&v) <= 1e-13 {
        return v;
    }
    orthonormalize(&v)
}

/// Absolute slack for floating-point rounding in the distance computation.
const ROUNDING_SLACK: f64 = 1e-12;

/// Outcome of comparing an estimate against the Wedin sin-theta bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedinCheck {
    /// `2 ||E|| / sigma_k`
    pub bound: f64,
    pub distance: f64,
    pub satisfied: bool,
    /// True when `bound >= 1`, where the check holds trivially.
    pub vacuous: bool,
}

pub fn wedin_ratio(
    b_hat: &DMatrix<f64>,
    b_star: &DMatrix<f64>,
    perturbation_norm: f64,
    sigma_k_star: f64,
) -> Result<WedinCheck> {
    if !(sigma_k_star > 0.0) {
        return Err(Error::Config("sigma_k of the unperturbed matrix must be positive".into()));
    }
    if !(perturbation_norm >= 0.0) {
        return Err(Error::Config("perturbation norm must be non-negative".into()));
    }
    let distance = principal_angle_distance(b_hat, b_star)?;
    let bound = 2.0 * perturbation_norm / sigma_k_star;
    if bound >= 1.0 {
        return Ok(WedinCheck { bound, distance, satisfied: true, vacuous: true });
    }
    Ok(WedinCheck { bound, distance, satisfied: distance <= bound + ROUNDING_SLACK, vacuous: false })
}

/// Random d×k orthonormal basis (Haar on the Stiefel manifold).
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    orthonormalize(&gaussian_matrix(rng, d, k))
}

/// Moves `b` along a Stiefel geodesic by `angle` radians toward a random
/// orthonormal complement: `B cos t + W sin t` with `W^T B = 0`. For
/// `angle <= pi/2` the distance to `b` is `sin(angle)`. Needs `2k <= d`.
pub fn rotate_toward_complement<R: Rng + ?Sized>(
    rng: &mut R,
    b: &DMatrix<f64>,
    angle: f64,
) -> Result<DMatrix<f64>> {
    let (d, k) = b.shape();
    if 2 * k > d {
        return Err(Error::Dimension(format!("need 2k <= d to rotate, got d={d} k={k}")));
    }
    let g = gaussian_matrix(rng, d, k);
    let w = orthonormalize(&(&g - b * b.tr_mul(&g)));
    Ok(b * angle.cos() + w * angle.sin())
}

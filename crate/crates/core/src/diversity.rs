//! Client diversity matrix `D = (1/N) sum_i n_i alpha_i alpha_i^T` and the
//! diagnostics built on its spectrum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, symmetric_eigen_desc};

/// Eigenvalues at or below this are treated as zero.
pub const EPS_RANK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySpectrum {
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub lambda1: f64,
    pub lambdak: f64,
    /// `lambda1 / lambdak`, or `f64::INFINITY` when `lambdak` is numerically zero.
    pub condition: f64,
    pub trace: f64,
}

impl DiversitySpectrum {
    pub fn is_identifiable(&self) -> bool {
        self.condition.is_finite()
    }
}

pub fn diversity_matrix(alphas: &DMatrix<f64>, partitions: &[usize]) -> Result<DMatrix<f64>> {
    let (k, m) = alphas.shape();
    if partitions.len() != m {
        return Err(Error::Dimension(format!(
            "alphas have {m} columns but partitions have {} entries",
            partitions.len()
        )));
    }
    if let Some(i) = partitions.iter().position(|&n| n == 0) {
        return Err(Error::InsufficientData { client: i, available: 0, required: 1 });
    }
    let total: usize = partitions.iter().sum();
    if total == 0 {
        return Err(Error::Dimension("no samples".into()));
    }
    // Scale columns by sqrt(n_i / N) so D = A A^T, which is symmetric exactly.
    let mut scaled = alphas.clone();
    for (i, &n) in partitions.iter().enumerate() {
        scaled.column_mut(i).scale_mut((n as f64 / total as f64).sqrt());
    }
    let mut d = &scaled * scaled.transpose();
    d.fill_upper_triangle_with_lower_triangle();
    debug_assert_eq!(d.nrows(), k);
    Ok(d)
}

pub fn spectrum(d: &DMatrix<f64>) -> Result<DiversitySpectrum> {
    let scale = crate::linalg::max_abs(d).max(1.0);
    if !is_symmetric(d, 1e-10 * scale) {
        return Err(Error::Shape("diversity matrix must be square and symmetric".into()));
    }
    if d.nrows() == 0 {
        return Err(Error::Shape("empty diversity matrix".into()));
    }
    let (mut values, _) = symmetric_eigen_desc(d);
    for v in values.iter_mut() {
        if v.abs() <= EPS_RANK {
            *v = v.max(0.0);
        }
    }
    let lambda1 = values[0];
    let lambdak = *values.last().unwrap();
    let condition = if lambdak <= EPS_RANK { f64::INFINITY } else { lambda1 / lambdak };
    Ok(DiversitySpectrum { trace: d.trace(), eigenvalues: values, lambda1, lambdak, condition })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellRepresented {
    pub satisfied: bool,
    /// `max_i n_i / mean(n)`
    pub ratio: f64,
}

/// Checks that no client dominates: `max_i n_i / mean(n) <= c sqrt(M / k)`.
pub fn well_represented_check(partitions: &[usize], k: usize, c: f64) -> Result<WellRepresented> {
    if partitions.is_empty() {
        return Err(Error::Dimension("empty partition vector".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Config("constant c must be positive".into()));
    }
    if k == 0 {
        return Err(Error::Dimension("k must be positive".into()));
    }
    let m = partitions.len() as f64;
    let mean = partitions.iter().sum::<usize>() as f64 / m;
    let max = *partitions.iter().max().unwrap() as f64;
    let ratio = max / mean;
    Ok(WellRepresented { satisfied: ratio <= c * (m / k as f64).sqrt(), ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::rng::rng_from_seed;

    fn naive_diversity(alphas: &DMatrix<f64>, partitions: &[usize]) -> DMatrix<f64> {
        let k = alphas.nrows();
        let total: usize = partitions.iter().sum();
        let mut d = DMatrix::zeros(k, k);
        for (i, &n) in partitions.iter().enumerate() {
            for r in 0..k {
                for s in 0..k {
                    d[(r, s)] += n as f64 * alphas[(r, i)] * alphas[(s, i)];
                }
            }
        }
        d / total as f64
    }

    #[test]
    fn orthonormal_heads_give_scaled_identity() {
        let k = 4;
        let d = diversity_matrix(&DMatrix::identity(k, k), &[7; 4]).unwrap();
        assert!((d - DMatrix::identity(k, k) / k as f64).amax() < 1e-15);
        let s = spectrum(&diversity_matrix(&DMatrix::identity(k, k), &[7; 4]).unwrap()).unwrap();
        assert!((s.lambda1 - 0.25).abs() < 1e-15 && (s.lambdak - 0.25).abs() < 1e-15);
        assert!((s.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_heads_are_rank_one() {
        let mut a = DMatrix::zeros(3, 5);
        a.row_mut(0).fill(1.0);
        let s = spectrum(&diversity_matrix(&a, &[1, 2, 3, 4, 5]).unwrap()).unwrap();
        assert_eq!(s.lambdak, 0.0);
        assert!(s.condition.is_infinite());
        assert!(!s.is_identifiable());
    }

    #[test]
    fn matches_naive_accumulation() {
        let mut rng = rng_from_seed(17);
        let a = gaussian_matrix(&mut rng, 3, 20);
        let parts: Vec<usize> = (0..20).map(|i| 1 + (i * 7) % 11).collect();
        let fast = diversity_matrix(&a, &parts).unwrap();
        assert!((fast.clone() - naive_diversity(&a, &parts)).amax() <= 1e-12);
        assert!((fast.clone() - fast.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn two_by_two_eigenvalues_match_quadratic_formula() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let g = gaussian_matrix(&mut rng, 2, 2);
            let d = &g * g.transpose() + DMatrix::identity(2, 2) * 0.1;
            let (a, b, c) = (d[(0, 0)], d[(0, 1)], d[(1, 1)]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
            let s = spectrum(&d).unwrap();
            assert!((s.lambda1 - (mid + rad)).abs() <= 1e-10);
            assert!((s.lambdak - (mid - rad)).abs() <= 1e-10);
        }
    }

    #[test]
    fn trace_matches_weighted_head_norms() {
        let mut rng = rng_from_seed(8);
        let a = gaussian_matrix(&mut rng, 4, 9);
        let parts = vec![3, 1, 4, 1, 5, 9, 2, 6, 5];
        let s = spectrum(&diversity_matrix(&a, &parts).unwrap()).unwrap();
        let total: usize = parts.iter().sum();
        let expected: f64 = parts
            .iter()
            .enumerate()
            .map(|(i, &n)| n as f64 * a.column(i).norm_squared())
            .sum::<f64>()
            / total as f64;
        assert!((s.trace - expected).abs() <= 1e-8);
        assert!((s.eigenvalues.iter().sum::<f64>() - expected).abs() <= 1e-8);
    }

    #[test]
    fn scaling_partitions_leaves_matrix_unchanged() {
        let mut rng = rng_from_seed(2);
        let a = gaussian_matrix(&mut rng, 3, 6);
        let parts = vec![2, 3, 5, 7, 11, 13];
        let scaled: Vec<usize> = parts.iter().map(|n| n * 4).collect();
        let d1 = diversity_matrix(&a, &parts).unwrap();
        let d2 = diversity_matrix(&a, &scaled).unwrap();
        assert!((d1 - d2).amax() <= 1e-14);
    }

    #[test]
    fn errors() {
        assert!(matches!(diversity_matrix(&DMatrix::zeros(2, 3), &[1, 1]), Err(Error::Dimension(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spectrum(&asym), Err(Error::Shape(_))));
        assert!(matches!(well_represented_check(&[], 2, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn well_represented_examples() {
        let eq = well_represented_check(&[60; 1000], 10, 1.0).unwrap();
        assert_eq!(eq.ratio, 1.0);
        assert!(eq.satisfied);
        // Threshold c = sqrt(k/M) sits exactly on the boundary.
        assert!(well_represented_check(&[5; 16], 4, 0.5).unwrap().satisfied);

        let m = 100;
        let mut skew = vec![1usize; m];
        skew[0] = 10_000 - (m - 1);
        let r = well_represented_check(&skew, 5, 1.0).unwrap();
        assert!(r.ratio > 90.0);
        assert!(!r.satisfied);
    }
}

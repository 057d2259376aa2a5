use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use super::sweep::{SweepResult, SweepRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Number of distinct x values used.
    pub points: usize,
}

/// Linearly interpolated quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Least-squares slope of `log(median y)` against `log x`, grouping points by x.
/// Non-positive or non-finite values are dropped with a warning.
pub fn fit_rate_exponent(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut groups: BTreeMap<OrderedFloat<f64>, Vec<f64>> = BTreeMap::new();
    let mut dropped = 0usize;
    for &(x, y) in points {
        if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
            groups.entry(OrderedFloat(x)).or_default().push(y);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} non-positive points before the log-log fit");
    }
    if groups.len() < 3 {
        return Err(Error::Config(format!("need at least 3 distinct x values, got {}", groups.len())));
    }
    let xy: Vec<(f64, f64)> = groups.iter().map(|(x, ys)| (x.0.ln(), median(ys).ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2, points: xy.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XField {
    D,
    K,
    M,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YField {
    SinTheta,
    Transfer,
}

impl YField {
    pub fn get(self, row: &SweepRow) -> Option<f64> {
        match self {
            YField::SinTheta => row.sin_theta_error,
            YField::Transfer => row.transfer_error,
        }
    }
}

/// `(x, y)` pairs for one estimator, joining rows to their configuration.
pub fn points_for(result: &SweepResult, estimator: &str, x: XField, y: YField) -> Vec<(f64, f64)> {
    result
        .rows
        .iter()
        .filter(|r| r.estimator == estimator)
        .filter_map(|r| {
            let cfg = result.configs.iter().find(|c| c.config_hash == r.config_hash)?;
            let xv = match x {
                XField::D => cfg.d,
                XField::K => cfg.k,
                XField::M => cfg.m,
                XField::N => cfg.total_samples,
            } as f64;
            Some((xv, y.get(r)?))
        })
        .collect()
}

/// [`fit_rate_exponent`] over the rows of one estimator.
pub fn fit_rows(result: &SweepResult, estimator: &str, x: XField, y: YField) -> Result<RateFit> {
    fit_rate_exponent(&points_for(result, estimator, x, y))
}

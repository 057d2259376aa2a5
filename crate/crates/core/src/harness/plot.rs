//! Per-series summary CSVs (and an optional SVG chart) for the standard plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ordered_float::OrderedFloat;

use super::rate::{points_for, quantile, XField, YField};
use super::sweep::{SweepResult, INDEPENDENT};
use crate::error::{Error, Result};

pub const SERIES_HEADER: &str = "x,median,q25,q75,mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// Subspace error against k.
    Fig2Style,
    /// Subspace error against k, heterogeneous setup.
    Fig3Style,
    /// Subspace error against M.
    Fig4Style,
    /// New-client parameter error against M, with the independent baseline.
    Fig5Style,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig2Style => "fig2_style",
            Recipe::Fig3Style => "fig3_style",
            Recipe::Fig4Style => "fig4_style",
            Recipe::Fig5Style => "fig5_style",
        }
    }

    fn axes(self) -> (XField, YField) {
        match self {
            Recipe::Fig2Style | Recipe::Fig3Style => (XField::K, YField::SinTheta),
            Recipe::Fig4Style => (XField::M, YField::SinTheta),
            Recipe::Fig5Style => (XField::M, YField::Transfer),
        }
    }

    fn includes(self, estimator: &str) -> bool {
        estimator != INDEPENDENT || self == Recipe::Fig5Style
    }
}

impl FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2_style" => Ok(Recipe::Fig2Style),
            "fig3_style" => Ok(Recipe::Fig3Style),
            "fig4_style" => Ok(Recipe::Fig4Style),
            "fig5_style" => Ok(Recipe::Fig5Style),
            other => Err(Error::Config(format!("unknown plot recipe '{other}'"))),
        }
    }
}

/// Summary statistics of one x position in a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub estimator: String,
    pub points: Vec<SeriesPoint>,
}

/// Groups rows by estimator (first-appearance order) and x (ascending).
/// Failed (NaN) measurements are skipped.
pub fn build_series(result: &SweepResult, recipe: Recipe) -> Vec<Series> {
    let (xf, yf) = recipe.axes();
    let mut names: Vec<String> = Vec::new();
    for r in &result.rows {
        if recipe.includes(&r.estimator) && yf.get(r).is_some() && !names.contains(&r.estimator) {
            names.push(r.estimator.clone());
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mut by_x: BTreeMap<OrderedFloat<f64>, Vec<f64>> = BTreeMap::new();
            for (x, y) in points_for(result, &name, xf, yf) {
                if y.is_finite() {
                    by_x.entry(OrderedFloat(x)).or_default().push(y);
                }
            }
            let points = by_x
                .into_iter()
                .map(|(x, mut ys)| {
                    ys.sort_by(f64::total_cmp);
                    SeriesPoint {
                        x: x.0,
                        median: quantile(&ys, 0.5),
                        q25: quantile(&ys, 0.25),
                        q75: quantile(&ys, 0.75),
                        mean: ys.iter().sum::<f64>() / ys.len() as f64,
                    }
                })
                .collect();
            Series { estimator: name, points }
        })
        .collect()
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn series_csv(points: &[SeriesPoint]) -> String {
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.x, p.median, p.q25, p.q75, p.mean);
    }
    s
}

/// Writes `<recipe>_<estimator>.csv` per series, or a header-only
/// `<recipe>.csv` when there is nothing to plot; with `svg`, also
/// `<recipe>.svg`. Returns the written paths in order.
pub fn emit_plot_data(result: &SweepResult, recipe: Recipe, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let series = build_series(result, recipe);
    let mut written = Vec::new();
    if series.is_empty() {
        let path = out_dir.join(format!("{}.csv", recipe.name()));
        std::fs::write(&path, format!("{SERIES_HEADER}\n"))?;
        written.push(path);
    }
    for s in &series {
        let path = out_dir.join(format!("{}_{}.csv", recipe.name(), file_stem(&s.estimator)));
        std::fs::write(&path, series_csv(&s.points))?;
        written.push(path);
    }
    if svg {
        let path = out_dir.join(format!("{}.svg", recipe.name()));
        std::fs::write(&path, render_svg(&series, recipe))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Median lines with interquartile bars on linear axes.
pub fn render_svg(series: &[Series], recipe: Recipe) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y1 = y1.max(p.q75).max(p.median);
    }
    if !x0.is_finite() {
        x0 = 0.0;
        x1 = 1.0;
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / y1 * (h - 2.0 * pad);
    let (xlabel, ylabel) = match recipe.axes() {
        (XField::K, _) => ("k", "sin-theta error"),
        (XField::M, YField::Transfer) => ("M", "theta error"),
        (XField::M, _) => ("M", "sin-theta error"),
        _ => ("x", "y"),
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{xlabel}</text>"#, w / 2.0, h - 20.0);
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {})">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, tick) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
        let y = tick * y1;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end" id="ytick{i}">{:.3}</text>"#,
            pad - 6.0,
            sy(y) + 3.0,
            y
        );
    }
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.median))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for p in &s.points {
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                sy(p.q25),
                sy(p.q75),
                sy(p.median),
                x = sx(p.x)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            w - pad - 120.0,
            pad + 16.0 * i as f64,
            s.estimator
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::{ConfigSummary, SweepRow};

    fn row(hash: u64, est: &str, rep: usize, err: f64) -> SweepRow {
        SweepRow {
            config_hash: hash,
            estimator: est.into(),
            repetition: rep,
            seed: rep as u64,
            sin_theta_error: Some(err),
            transfer_error: Some(err * 2.0),
            lambda1: 0.2,
            lambdak: 0.1,
            wallclock_ms: 0.0,
            diagnostic: None,
        }
    }

    fn fake_result() -> SweepResult {
        let configs: Vec<ConfigSummary> = [5usize, 10, 15]
            .iter()
            .enumerate()
            .map(|(i, &k)| ConfigSummary { config_hash: i as u64, d: 40, k, m: 300, total_samples: 6000 })
            .collect();
        let mut rows = Vec::new();
        for c in &configs {
            for rep in 0..4 {
                rows.push(row(c.config_hash, "replica", rep, 0.1 * c.k as f64 / 5.0 + rep as f64 * 0.01));
                rows.push(row(c.config_hash, "mom", rep, 0.2 * c.k as f64 / 5.0));
            }
        }
        SweepResult { configs, rows }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&SweepResult::default(), Recipe::Fig2Style, dir.path(), false).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(std::fs::read_to_string(&files[0]).unwrap(), format!("{SERIES_HEADER}\n"));
    }

    #[test]
    fn two_series_of_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&fake_result(), Recipe::Fig2Style, dir.path(), true).unwrap();
        assert_eq!(files.len(), 3);
        let replica = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(replica.lines().count(), 4);
        assert!(replica.lines().nth(1).unwrap().starts_with("5,0.115,"));
        assert!(std::fs::read_to_string(&files[2]).unwrap().starts_with("<svg"));
        // Byte-deterministic.
        let again = tempfile::tempdir().unwrap();
        let files2 = emit_plot_data(&fake_result(), Recipe::Fig2Style, again.path(), true).unwrap();
        for (a, b) in files.iter().zip(&files2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn baseline_only_in_transfer_recipe() {
        let mut res = fake_result();
        let mut base = row(0, INDEPENDENT, 0, 0.0);
        base.sin_theta_error = None;
        base.transfer_error = Some(0.7);
        res.rows.push(base);
        let names = |r: Recipe| build_series(&res, r).into_iter().map(|s| s.estimator).collect::<Vec<_>>();
        assert!(!names(Recipe::Fig2Style).contains(&INDEPENDENT.to_string()));
        assert!(names(Recipe::Fig5Style).contains(&INDEPENDENT.to_string()));
    }

    #[test]
    fn unknown_recipe() {
        assert!(matches!("fig9_style".parse::<Recipe>(), Err(Error::Config(_))));
    }
}

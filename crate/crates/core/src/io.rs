//! On-disk formats: ground-truth JSON, per-client dataset bundles and
//! subspace estimate CSVs. Floats are written in shortest round-trip form,
//! so a write/read cycle is exact.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClientData, Covariance, FederatedDataset, GroundTruth};
use crate::subspace::SubspaceEstimate;

pub const BUNDLE_FORMAT: &str = "shared-rep-bundle";
pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{what}: ragged rows, expected {ncols} columns")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CovarianceRecord {
    Identity,
    Diagonal { entries: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroundTruthRecord {
    format: String,
    version: u32,
    d: usize,
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    noise_sigma: f64,
    /// d rows of k entries.
    b_star: Vec<Vec<f64>>,
    /// One k-vector per client.
    alphas: Vec<Vec<f64>>,
    gammas: Vec<CovarianceRecord>,
}

pub fn ground_truth_to_json(gt: &GroundTruth) -> Result<String> {
    let gammas = gt
        .gammas
        .iter()
        .map(|g| match g {
            Covariance::Identity => CovarianceRecord::Identity,
            Covariance::Diagonal(v) => CovarianceRecord::Diagonal { entries: v.iter().copied().collect() },
            Covariance::Dense { matrix, .. } => CovarianceRecord::Dense { rows: rows_of(matrix) },
        })
        .collect();
    let rec = GroundTruthRecord {
        format: "shared-rep-ground-truth".into(),
        version: BUNDLE_VERSION,
        d: gt.d,
        k: gt.k,
        m: gt.m,
        noise_sigma: gt.noise_sigma,
        b_star: rows_of(&gt.b_star),
        alphas: (0..gt.m).map(|i| gt.alphas.column(i).iter().copied().collect()).collect(),
        gammas,
    };
    Ok(serde_json::to_string_pretty(&rec)?)
}

pub fn ground_truth_from_json(text: &str) -> Result<GroundTruth> {
    let rec: GroundTruthRecord = serde_json::from_str(text)?;
    if rec.version != BUNDLE_VERSION {
        return Err(Error::Parse(format!("unsupported ground truth version {}", rec.version)));
    }
    let b_star = from_rows(&rec.b_star, rec.k, "b_star")?;
    if b_star.nrows() != rec.d || rec.alphas.len() != rec.m || rec.gammas.len() != rec.m {
        return Err(Error::Parse("ground truth shapes disagree with d, k, M".into()));
    }
    let alphas = from_rows(&rec.alphas, rec.k, "alphas")?.transpose();
    let gammas = rec
        .gammas
        .into_iter()
        .map(|g| match g {
            CovarianceRecord::Identity => Ok(Covariance::Identity),
            CovarianceRecord::Diagonal { entries } => Covariance::diagonal(DVector::from_vec(entries)),
            CovarianceRecord::Dense { rows } => Covariance::dense(from_rows(&rows, rec.d, "gamma")?),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { d: rec.d, k: rec.k, m: rec.m, b_star, alphas, gammas, noise_sigma: rec.noise_sigma })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub num_clients: usize,
    pub sizes: Vec<usize>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn client_file_name(i: usize) -> String {
    format!("client_{i:05}.csv")
}

fn client_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
    h.push("y".into());
    h
}

pub fn write_client_csv(path: &Path, client: &ClientData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(client_header(client.x.ncols()))?;
    let mut rec = Vec::with_capacity(client.x.ncols() + 1);
    for r in 0..client.len() {
        rec.clear();
        rec.extend(client.x.row(r).iter().map(|v| v.to_string()));
        rec.push(client.y[r].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a client CSV whose header is `x_1..x_d, y` in that order.
pub fn read_client_csv(path: &Path) -> Result<ClientData> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(1);
    let expected = client_header(d);
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!("{}: header must be x_1..x_d,y", path.display())));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}: bad number '{field}'", path.display())))?;
            values.push(v);
        }
        n += 1;
    }
    let full = DMatrix::from_row_slice(n, d + 1, &values);
    ClientData::new(full.columns(0, d).into_owned(), full.column(d).into_owned())
}

/// Writes `manifest.json` plus one CSV per client into `dir`.
pub fn write_bundle(dir: &Path, data: &FederatedDataset, seed: Option<u64>, config_hash: Option<String>) -> Result<BundleManifest> {
    fs::create_dir_all(dir)?;
    let files: Vec<String> = (0..data.num_clients()).map(client_file_name).collect();
    for (client, name) in data.clients.iter().zip(&files) {
        write_client_csv(&dir.join(name), client)?;
    }
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        d: data.d,
        num_clients: data.num_clients(),
        sizes: data.partitions(),
        files,
        seed,
        config_hash,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_bundle(dir: &Path) -> Result<(BundleManifest, FederatedDataset)> {
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != BUNDLE_FORMAT || manifest.version != BUNDLE_VERSION {
        return Err(Error::Parse(format!("unsupported bundle {} v{}", manifest.format, manifest.version)));
    }
    let clients = manifest
        .files
        .iter()
        .map(|f| read_client_csv(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let data = FederatedDataset::new(manifest.d, clients)?;
    if data.partitions() != manifest.sizes {
        return Err(Error::Parse("client sizes disagree with manifest".into()));
    }
    Ok((manifest, data))
}

/// Metadata stored on the first line of an estimate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMetadata {
    pub estimator: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub degenerate_gap: bool,
    #[serde(default)]
    pub spectrum: Vec<f64>,
}

/// `# {json}` then d lines of k comma-separated values.
pub fn estimate_to_csv(est: &SubspaceEstimate, seed: Option<u64>, config_hash: Option<String>) -> Result<String> {
    let meta = EstimateMetadata {
        estimator: est.source.clone(),
        seed,
        config_hash,
        d: est.basis.nrows(),
        k: est.basis.ncols(),
        degenerate_gap: est.degenerate_gap,
        spectrum: est.spectrum.clone(),
    };
    let mut out = format!("# {}\n", serde_json::to_string(&meta)?);
    for r in 0..est.basis.nrows() {
        let row: Vec<String> = est.basis.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn estimate_from_csv(text: &str) -> Result<(EstimateMetadata, SubspaceEstimate)> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Parse("empty estimate file".into()))?;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("estimate file must start with a '# {json}' line".into()))?;
    let meta: EstimateMetadata = serde_json::from_str(json.trim())?;
    let mut values = Vec::with_capacity(meta.d * meta.k);
    let mut rows = 0;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let before = values.len();
        for f in line.split(',') {
            values.push(f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{f}'")))?);
        }
        if values.len() - before != meta.k {
            return Err(Error::Parse(format!("estimate row {rows} has {} values, expected {}", values.len() - before, meta.k)));
        }
        rows += 1;
    }
    if rows != meta.d {
        return Err(Error::Parse(format!("estimate has {rows} rows, expected {}", meta.d)));
    }
    let basis = DMatrix::from_row_slice(meta.d, meta.k, &values);
    let mut est = SubspaceEstimate::new(basis, meta.estimator.clone())?;
    est.degenerate_gap = meta.degenerate_gap;
    est.spectrum = meta.spectrum.clone();
    Ok((meta, est))
}

pub fn write_estimate(path: &Path, est: &SubspaceEstimate, seed: Option<u64>, config_hash: Option<String>) -> Result<PathBuf> {
    fs::write(path, estimate_to_csv(est, seed, config_hash)?)?;
    Ok(path.to_path_buf())
}

pub fn read_estimate(path: &Path) -> Result<(EstimateMetadata, SubspaceEstimate)> {
    estimate_from_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimator_replica;
    use crate::model::{sample_dataset, GammaProfile, GroundTruthSpec};

    fn instance() -> (GroundTruth, FederatedDataset) {
        let spec = GroundTruthSpec::new(6, 2, 4).with_gamma(GammaProfile::Dense { cond: 5.0 });
        let gt = GroundTruth::generate(&spec, 3).unwrap();
        let data = sample_dataset(&gt, &[5, 3, 8, 4], 9).unwrap();
        (gt, data)
    }

    #[test]
    fn ground_truth_round_trip() {
        let (gt, _) = instance();
        let back = ground_truth_from_json(&ground_truth_to_json(&gt).unwrap()).unwrap();
        assert_eq!(back.b_star, gt.b_star);
        assert_eq!(back.alphas, gt.alphas);
        for (a, b) in back.gammas.iter().zip(&gt.gammas) {
            assert_eq!(a.to_dense(6), b.to_dense(6));
        }
    }

    #[test]
    fn bundle_round_trip() {
        let (_, data) = instance();
        let dir = tempfile::tempdir().unwrap();
        let m = write_bundle(dir.path(), &data, Some(9), None).unwrap();
        assert_eq!(m.sizes, vec![5, 3, 8, 4]);
        let header = fs::read_to_string(dir.path().join("client_00000.csv")).unwrap();
        assert!(header.starts_with("x_1,x_2,x_3,x_4,x_5,x_6,y\n"));
        let (_, back) = read_bundle(dir.path()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn bad_client_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        fs::write(&p, "a,b,y\n1,2,3\n").unwrap();
        assert!(matches!(read_client_csv(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn estimate_round_trip() {
        let (_, data) = instance();
        let est = estimator_replica(&data, 2).unwrap();
        let text = estimate_to_csv(&est, Some(4), Some("abc".into())).unwrap();
        assert!(text.starts_with("# {\"estimator\":\"replica\""));
        let (meta, back) = estimate_from_csv(&text).unwrap();
        assert_eq!(meta.seed, Some(4));
        assert_eq!(back.basis, est.basis);
    }

    #[test]
    fn estimate_rejects_non_orthonormal() {
        let text = "# {\"estimator\":\"x\",\"seed\":null,\"config_hash\":null,\"d\":2,\"k\":1}\n1\n1\n";
        assert!(estimate_from_csv(text).is_err());
    }
}

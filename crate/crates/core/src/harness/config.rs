use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::model::{
    AlphaScheme, GammaProfile, GroundTruthSpec, LinkSpec, PartitionScheme, DEFAULT_ALPHA_BOUND,
    DEFAULT_GAMMA_COND_BOUND, DEFAULT_NOISE_SIGMA,
};

/// Response model selectable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    #[default]
    Linear,
    Logistic,
    ReluNetwork,
}

impl LinkKind {
    pub fn to_spec(self) -> LinkSpec {
        match self {
            LinkKind::Linear => LinkSpec::Linear,
            LinkKind::Logistic => LinkSpec::Logistic,
            LinkKind::ReluNetwork => LinkSpec::ReluNetwork { head_weights: None },
        }
    }
}

/// Fine-tuning a held-out client on each learned representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBlock {
    pub n_new: usize,
    /// When set, the head is fitted with the private mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_clip")]
    pub clip_bound: f64,
    /// Also report plain least squares on the new client's data.
    #[serde(default = "default_true")]
    pub independent_baseline: bool,
}

fn default_delta() -> f64 {
    1e-5
}
fn default_clip() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_repetitions() -> usize {
    10
}
fn default_noise() -> f64 {
    DEFAULT_NOISE_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub k: usize,
    #[serde(rename = "M", alias = "m")]
    pub m: usize,
    pub partition: PartitionScheme,
    #[serde(default)]
    pub gamma: GammaProfile,
    #[serde(default)]
    pub alpha: AlphaScheme,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub link: LinkKind,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferBlock>,
}

impl ExperimentConfig {
    pub fn new(d: usize, k: usize, m: usize, partition: PartitionScheme) -> Self {
        Self {
            d,
            k,
            m,
            partition,
            gamma: GammaProfile::Identity,
            alpha: AlphaScheme::Gaussian,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            link: LinkKind::Linear,
            estimators: vec![EstimatorKind::Replica],
            repetitions: default_repetitions(),
            master_seed: 0,
            transfer: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.link != LinkKind::Linear && self.gamma != GammaProfile::Identity {
            return Err(Error::Config("nonlinear links require identity covariances".into()));
        }
        if let Some(t) = &self.transfer {
            if t.n_new == 0 {
                return Err(Error::Config("transfer block needs n_new >= 1".into()));
            }
            if self.link != LinkKind::Linear {
                return Err(Error::Config("transfer is only defined for the linear model".into()));
            }
            if let Some(eps) = t.epsilon {
                crate::transfer::PrivacyParams { epsilon: eps, delta: t.delta, clip_bound: t.clip_bound }
                    .validate()?;
            }
        }
        Ok(())
    }

    pub fn ground_truth_spec(&self) -> GroundTruthSpec {
        GroundTruthSpec {
            d: self.d,
            k: self.k,
            m: self.m,
            gamma: self.gamma.clone(),
            alpha: self.alpha.clone(),
            alpha_bound: DEFAULT_ALPHA_BOUND,
            gamma_cond_bound: DEFAULT_GAMMA_COND_BOUND,
            noise_sigma: self.noise_sigma,
        }
    }

    /// 64-bit hash of the canonical JSON serialisation.
    pub fn hash(&self) -> u64 {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&canonical);
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Axes of a cartesian sweep. Empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default, rename = "M", alias = "m")]
    pub m: Vec<usize>,
    /// Per-client sample count; only valid with equal partitions.
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigGrid {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: GridAxes,
}

impl ConfigGrid {
    pub fn single(base: ExperimentConfig) -> Self {
        Self { base, grid: GridAxes::default() }
    }

    /// Expands in the order d, M, n, k (k varies fastest).
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        fn axis(values: &[usize], base: usize) -> Vec<usize> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let base_n = match &self.base.partition {
            PartitionScheme::Equal { n } => Some(*n),
            _ => None,
        };
        if !self.grid.n.is_empty() && base_n.is_none() {
            return Err(Error::Config("the n axis needs equal partitions".into()));
        }
        let ns: Vec<Option<usize>> = if self.grid.n.is_empty() {
            vec![base_n]
        } else {
            self.grid.n.iter().map(|&n| Some(n)).collect()
        };
        let mut out = Vec::new();
        for &d in &axis(&self.grid.d, self.base.d) {
            for &m in &axis(&self.grid.m, self.base.m) {
                for n in &ns {
                    for &k in &axis(&self.grid.k, self.base.k) {
                        let mut cfg = self.base.clone();
                        cfg.d = d;
                        cfg.m = m;
                        cfg.k = k;
                        if let Some(n) = n {
                            cfg.partition = PartitionScheme::Equal { n: *n };
                        }
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accepts either a grid file (`[base]` plus optional `[grid]`) or a
    /// single flat experiment.
    pub fn from_toml_any(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if value.contains_key("base") {
            Self::from_toml(text)
        } else {
            ExperimentConfig::from_toml(text).map(Self::single)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let grid: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.base.validate()?;
        Ok(grid)
    }
}

/// Named presets: `paper` is the full-scale grid, `desk` runs in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }
}

/// Experimental setups: (1) isotropic covariates with equal partitions,
/// (2) heterogeneous diagonal covariances with uniform partitions on `[2, 2d-2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    Homogeneous,
    Heterogeneous,
}

pub fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Replica,
        EstimatorKind::Multigroup(2),
        EstimatorKind::MultigroupAll,
        EstimatorKind::Mom,
        EstimatorKind::Pairwise,
    ]
}

/// Error-versus-k grid for a profile and setup.
pub fn profile_grid(profile: Profile, setup: Setup) -> ConfigGrid {
    let (d, m, n, ks) = match profile {
        Profile::Paper => (120, 1000, 60, vec![5, 10, 15, 20]),
        Profile::Desk => (40, 300, 20, vec![5, 10, 15]),
    };
    let mut base = ExperimentConfig::new(d, ks[0], m, PartitionScheme::Equal { n });
    base.estimators = default_estimators();
    if setup == Setup::Heterogeneous {
        base.partition = PartitionScheme::Uniform { lo: 2, hi: 2 * d - 2 };
        base.gamma = GammaProfile::Diagonal { cond: DEFAULT_GAMMA_COND_BOUND };
    }
    ConfigGrid { base, grid: GridAxes { k: ks, ..GridAxes::default() } }
}

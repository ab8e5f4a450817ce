//! Flat experiment configuration, readable from TOML and mirrored by the CLI.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::family::{FamilyLabel, FamilySpec};
use crate::optimizer::{Estimator, OptimizerConfig};
use crate::targets::{
    synthetic, DesignMatrix, GaussianToy, LoadOptions, LogisticRegression, MixedLogistic,
    TargetModel,
};
use crate::transforms::TransformKind;

/// Where the posterior comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// Logistic regression on a CSV design matrix (`data`).
    Csv,
    /// Bivariate Gaussian with correlation `toy_rho` and evidence `toy_log_c`.
    GaussianToy,
    /// Logistic regression on simulated covariates.
    LogisticSynthetic,
    /// Simulated random-intercept logistic model with `m = 509`.
    PolypharmacyLike,
}

impl FromStr for TargetSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TargetSource::Csv),
            "gaussian-toy" | "toy" => Ok(TargetSource::GaussianToy),
            "logistic-synthetic" => Ok(TargetSource::LogisticSynthetic),
            "polypharmacy-like" => Ok(TargetSource::PolypharmacyLike),
            other => Err(Error::Spec(format!("unknown target '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    Gaussian,
    #[serde(alias = "skewnormal")]
    SkewNormal,
}

impl FromStr for Base {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Base::Gaussian),
            "skew-normal" | "skewnormal" => Ok(Base::SkewNormal),
            other => Err(Error::Spec(format!("unknown base distribution '{other}'"))),
        }
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Base::Gaussian => "gaussian",
            Base::SkewNormal => "skew-normal",
        })
    }
}

/// One experiment: target, family, optimizer settings and outputs.
///
/// Every key is optional in a config file; missing keys take the defaults
/// below. `family = "A5"` is shorthand for the matching `base`, `transform`
/// and `mean_field` values and is folded into them by [`normalized`].
///
/// [`normalized`]: ExperimentSpec::normalized
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,

    pub target: TargetSource,
    pub data: Option<PathBuf>,
    pub intercept: bool,
    pub standardize: bool,
    /// Variance of the `N(0, vI)` prior for logistic targets.
    pub prior_var: f64,
    pub toy_rho: f64,
    pub toy_log_c: f64,
    pub synthetic_n: usize,
    pub synthetic_beta: Vec<f64>,
    /// Seed for simulated datasets; independent of the optimizer seed.
    pub data_seed: u64,

    pub family: Option<FamilyLabel>,
    pub base: Base,
    pub transform: TransformKind,
    /// Factor count, capped at the target dimension.
    pub k: usize,
    pub mean_field: bool,

    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub window: usize,
    pub rho: f64,
    pub eps: f64,
    pub checkpoint_every: usize,
    pub baseline_decay: f64,

    pub moment_draws: usize,
    /// Importance-sampling draws for a reference posterior when quadrature
    /// does not apply (more than two dimensions, or the mixed model); 0 skips it.
    pub importance_draws: usize,
    /// Coordinates that get a marginal density curve; defaults to the first
    /// eight.
    pub marginal_coords: Option<Vec<usize>>,
    pub marginal_points: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        ExperimentSpec {
            name: String::new(),
            target: TargetSource::GaussianToy,
            data: None,
            intercept: true,
            standardize: false,
            prior_var: 10.0,
            toy_rho: 0.8,
            toy_log_c: 0.0,
            synthetic_n: 200,
            synthetic_beta: vec![0.5, -1.0],
            data_seed: 7,
            family: None,
            base: Base::Gaussian,
            transform: TransformKind::Identity,
            k: 3,
            mean_field: false,
            steps: opt.n_steps,
            samples: opt.samples_per_step,
            seed: opt.seed,
            estimator: opt.estimator,
            window: opt.elbo_window,
            rho: opt.adadelta_rho,
            eps: opt.adadelta_eps,
            checkpoint_every: opt.checkpoint_every,
            baseline_decay: opt.baseline_decay,
            moment_draws: 100_000,
            importance_draws: 0,
            marginal_coords: None,
            marginal_points: 512,
            out_dir: None,
        }
    }
}

/// A constructed posterior.
pub enum BuiltTarget {
    Logistic(LogisticRegression),
    Mixed(MixedLogistic),
    Toy(GaussianToy),
}

impl BuiltTarget {
    pub fn model(&self) -> &dyn TargetModel {
        match self {
            BuiltTarget::Logistic(t) => t,
            BuiltTarget::Mixed(t) => t,
            BuiltTarget::Toy(t) => t,
        }
    }
}

/// Reads a prepared design matrix (see [`DesignMatrix::from_csv_reader`]).
pub fn load_dataset(path: impl AsRef<Path>, options: LoadOptions) -> Result<DesignMatrix> {
    DesignMatrix::from_csv_path(path, options)
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_toml_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }

    /// Same experiment with a family label replaced by its components.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        if let Some(label) = out.family.take() {
            let fs = label.spec(1, 1);
            out.base = if fs.skew {
                Base::SkewNormal
            } else {
                Base::Gaussian
            };
            out.transform = fs.transform;
            out.mean_field = fs.k == 0;
        }
        out
    }

    pub fn with_family(&self, label: FamilyLabel) -> Self {
        ExperimentSpec {
            family: Some(label),
            ..self.clone()
        }
        .normalized()
    }

    /// First 16 hex digits of the SHA-256 of the normalized spec as JSON,
    /// ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut s = self.normalized();
        s.out_dir = None;
        let json = serde_json::to_vec(&s).expect("experiment spec serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Identifies the target; experiments in one grid must agree on it.
    pub fn target_key(&self) -> String {
        let s = &self.normalized();
        match s.target {
            TargetSource::Csv => format!(
                "csv:{}:{}:{}:{}",
                s.data
                    .as_deref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
                s.intercept,
                s.standardize,
                s.prior_var
            ),
            TargetSource::GaussianToy => format!("toy:{}:{}", s.toy_rho, s.toy_log_c),
            TargetSource::LogisticSynthetic => format!(
                "logistic-synthetic:{}:{:?}:{}:{}",
                s.synthetic_n, s.synthetic_beta, s.data_seed, s.prior_var
            ),
            TargetSource::PolypharmacyLike => format!("polypharmacy-like:{}", s.data_seed),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            n_steps: self.steps,
            samples_per_step: self.samples,
            seed: self.seed,
            adadelta_rho: self.rho,
            adadelta_eps: self.eps,
            estimator: self.estimator,
            elbo_window: self.window,
            checkpoint_every: self.checkpoint_every,
            baseline_decay: self.baseline_decay,
        }
    }

    pub fn family_spec(&self, m: usize) -> Result<FamilySpec> {
        let s = self.normalized();
        let k = if s.mean_field { 0 } else { s.k.min(m) };
        FamilySpec::new(m, k, s.transform, s.base == Base::SkewNormal)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer_config().validate()?;
        let bad = |msg: &str| Err(Error::Spec(msg.into()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return bad("prior_var must be positive");
        }
        if self.toy_rho.is_nan() || self.toy_rho.abs() >= 1.0 {
            return bad("toy_rho must lie in (-1, 1)");
        }
        if self.moment_draws < 2 {
            return bad("moment_draws must be at least 2");
        }
        if self.importance_draws == 1 {
            return bad("importance_draws must be 0 or at least 2");
        }
        if self.marginal_points < 2 {
            return bad("marginal_points must be at least 2");
        }
        if self.target == TargetSource::Csv && self.data.is_none() {
            return bad("target 'csv' needs a data path");
        }
        if self.target == TargetSource::LogisticSynthetic && self.synthetic_beta.is_empty() {
            return bad("synthetic_beta must not be empty");
        }
        Ok(())
    }

    pub fn build_target(&self) -> Result<BuiltTarget> {
        self.validate()?;
        Ok(match self.target {
            TargetSource::Csv => {
                let path = self.data.as_ref().expect("validated");
                let opts = LoadOptions {
                    add_intercept: self.intercept,
                    standardize: self.standardize,
                };
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                BuiltTarget::Logistic(
                    LogisticRegression::new(load_dataset(path, opts)?, self.prior_var)?
                        .with_name(name),
                )
            }
            TargetSource::GaussianToy => {
                BuiltTarget::Toy(GaussianToy::correlated_pair(self.toy_rho, self.toy_log_c)?)
            }
            TargetSource::LogisticSynthetic => {
                let data = synthetic::logistic_dataset(
                    self.synthetic_n,
                    &self.synthetic_beta,
                    self.data_seed,
                )?;
                BuiltTarget::Logistic(
                    LogisticRegression::new(data, self.prior_var)?.with_name("logistic-synthetic"),
                )
            }
            TargetSource::PolypharmacyLike => {
                BuiltTarget::Mixed(synthetic::polypharmacy_like(self.data_seed)?)
            }
        })
    }
}

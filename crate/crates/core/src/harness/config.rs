//! JSON experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blocking::{choose_block_count, BlockCountRule};
use crate::contamination::{
    ContaminationModel, ContaminationSpec, DistributionKind, DistributionSpec,
};
use crate::covariance::CenterMode;
use crate::depth::TukeyOptions;
use crate::error::{Error, Result};
use crate::linalg::sym_eigendecomposition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Mean,
    Covariance,
    Tukey,
    Pca,
    Lemma7,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Mean => "mean",
            Experiment::Covariance => "covariance",
            Experiment::Tukey => "tukey",
            Experiment::Pca => "pca",
            Experiment::Lemma7 => "lemma7",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    LmMom,
    CoordwiseMom,
    GeomedianMom,
    TukeyMom,
    EmpiricalMean,
    /// Median-of-means covariance (covariance and pca experiments).
    CovMom,
    /// Sample covariance about the sample mean.
    EmpiricalCov,
}

impl EstimatorName {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorName::LmMom => "lm_mom",
            EstimatorName::CoordwiseMom => "coordwise_mom",
            EstimatorName::GeomedianMom => "geomedian_mom",
            EstimatorName::TukeyMom => "tukey_mom",
            EstimatorName::EmpiricalMean => "empirical_mean",
            EstimatorName::CovMom => "cov_mom",
            EstimatorName::EmpiricalCov => "empirical_cov",
        }
    }

    fn is_mean_estimator(self) -> bool {
        !matches!(self, EstimatorName::CovMom | EstimatorName::EmpiricalCov)
    }
}

impl fmt::Display for EstimatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Either a fixed `K` or `"auto(delta)"`, resolved with [`choose_block_count`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockSpec {
    Fixed(usize),
    Auto { delta: f64 },
}

impl BlockSpec {
    pub fn resolve(&self, dim: usize, corrupt: usize, n_samples: usize) -> Result<usize> {
        match *self {
            BlockSpec::Fixed(k) => Ok(k),
            BlockSpec::Auto { delta } => {
                choose_block_count(delta, dim, corrupt, n_samples, BlockCountRule::default())
            }
        }
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSpec::Fixed(k) => write!(f, "{k}"),
            BlockSpec::Auto { delta } => write!(f, "auto({delta})"),
        }
    }
}

impl FromStr for BlockSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("auto(").and_then(|r| r.strip_suffix(')')) {
            let delta: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad delta in `{s}`")))?;
            return Ok(BlockSpec::Auto { delta });
        }
        s.parse().map(BlockSpec::Fixed).map_err(|_| {
            Error::Config(format!(
                "n_blocks must be a count or \"auto(delta)\", got `{s}`"
            ))
        })
    }
}

impl Serialize for BlockSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BlockSpec::Fixed(k) => serializer.serialize_u64(*k as u64),
            auto => serializer.collect_str(auto),
        }
    }
}

impl<'de> Deserialize<'de> for BlockSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(k) => Ok(BlockSpec::Fixed(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    /// Random unit directions added to the coordinate axes.
    #[serde(default = "default_n_random")]
    pub n_random: usize,
    /// Add normalized differences of sample rows.
    #[serde(default)]
    pub use_data_hint: bool,
}

fn default_n_random() -> usize {
    100
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            n_random: default_n_random(),
            use_data_hint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub distribution: DistributionSpec,
    #[serde(default = "ContaminationSpec::none")]
    pub contamination: ContaminationSpec,
    pub n_samples: usize,
    pub n_blocks: BlockSpec,
    pub dim: usize,
    #[serde(default)]
    pub pool: PoolConfig,
    pub n_trials: usize,
    pub seed: u64,
    /// Defaults per experiment when empty.
    #[serde(default)]
    pub estimators: Vec<EstimatorName>,
    /// Target rank for `pca`.
    #[serde(default = "default_rank")]
    pub pca_rank: usize,
    #[serde(default = "default_center")]
    pub cov_center: CenterMode,
    #[serde(default = "default_alpha")]
    pub lemma7_alpha: f64,
    /// Overrides the Markov radius `R sqrt(4 alpha / m)` in `lemma7`.
    #[serde(default)]
    pub lemma7_radius: Option<f64>,
    /// Draws for the R / σ oracles when no closed form applies.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default)]
    pub tukey: TukeyOptions,
    /// Wall-clock timings make output non-reproducible, so they are off
    /// unless requested.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_rank() -> usize {
    1
}

fn default_center() -> CenterMode {
    CenterMode::MomMean
}

fn default_alpha() -> f64 {
    2.0
}

fn default_oracle_samples() -> usize {
    100_000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Estimators to run, in a fixed order.
    pub fn resolved_estimators(&self) -> Vec<EstimatorName> {
        if self.estimators.is_empty() {
            return match self.experiment {
                Experiment::Mean => vec![EstimatorName::LmMom],
                Experiment::Tukey => vec![EstimatorName::TukeyMom],
                Experiment::Covariance | Experiment::Pca => vec![EstimatorName::CovMom],
                Experiment::Lemma7 => Vec::new(),
            };
        }
        let mut out = self.estimators.clone();
        out.sort();
        out.dedup();
        out
    }

    /// Outlier count the block rule must absorb: exact for the adversarial
    /// model, the expected count for the Huber model.
    pub fn planned_outliers(&self) -> usize {
        match self.contamination.model {
            ContaminationModel::Adversarial => self.contamination.corrupt_count(self.n_samples),
            ContaminationModel::Huber => {
                (self.contamination.eps_corrupt * self.n_samples as f64).ceil() as usize
            }
        }
    }

    pub fn resolve_blocks(&self) -> Result<usize> {
        self.n_blocks
            .resolve(self.dim, self.planned_outliers(), self.n_samples)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 || self.n_samples == 0 || self.n_trials == 0 {
            return fail("dim, n_samples and n_trials must be positive".into());
        }
        if self.distribution.dim != self.dim {
            return fail(format!(
                "distribution.dim is {} but dim is {}",
                self.distribution.dim, self.dim
            ));
        }
        self.distribution
            .validate()
            .map_err(|e| Error::Config(format!("distribution: {e}")))?;
        self.contamination
            .validate(self.dim)
            .map_err(|e| Error::Config(format!("contamination: {e}")))?;
        let k = self
            .resolve_blocks()
            .map_err(|e| Error::Config(format!("n_blocks: {e}")))?;
        if k == 0 || k > self.n_samples {
            return fail(format!(
                "n_blocks resolves to {k}, which must lie in 1..={}",
                self.n_samples
            ));
        }
        if let BlockSpec::Auto { delta } = self.n_blocks {
            if !(delta > 0.0 && delta < 1.0) {
                return fail(format!("auto delta must lie in (0, 1), got {delta}"));
            }
        }
        if self.oracle_samples < 10_000 {
            return fail(format!(
                "oracle_samples must be at least 10000, got {}",
                self.oracle_samples
            ));
        }
        for e in self.resolved_estimators() {
            let ok = match self.experiment {
                Experiment::Mean | Experiment::Tukey => e.is_mean_estimator(),
                Experiment::Covariance => !e.is_mean_estimator(),
                Experiment::Pca => e == EstimatorName::CovMom,
                Experiment::Lemma7 => false,
            };
            if !ok {
                return fail(format!(
                    "estimator `{e}` does not apply to the {} experiment",
                    self.experiment.name()
                ));
            }
        }
        match self.experiment {
            Experiment::Pca => {
                if self.pca_rank == 0 || self.pca_rank >= self.dim {
                    return fail(format!(
                        "pca_rank must satisfy 1 <= k < dim = {}, got {}",
                        self.dim, self.pca_rank
                    ));
                }
                let target = match self.cov_center {
                    CenterMode::MomMean => self.distribution.covariance(),
                    CenterMode::None => self.distribution.second_moment(),
                };
                let Some(target) = target else {
                    return fail("pca needs a distribution with finite covariance".into());
                };
                let eig = sym_eigendecomposition(&target)?;
                if !(eig.eigvals[self.pca_rank - 1] > eig.eigvals[self.pca_rank]) {
                    return fail(format!(
                        "target spectrum has no gap after the top {} eigenvalues",
                        self.pca_rank
                    ));
                }
            }
            Experiment::Covariance => {
                if self.distribution.covariance().is_none() {
                    return fail("covariance needs a distribution with finite covariance".into());
                }
            }
            Experiment::Lemma7 => {
                if !(self.lemma7_alpha > 1.0) || !self.lemma7_alpha.is_finite() {
                    return fail(format!(
                        "lemma7_alpha must exceed 1, got {}",
                        self.lemma7_alpha
                    ));
                }
                if let Some(r) = self.lemma7_radius {
                    if !(r > 0.0) || !r.is_finite() {
                        return fail(format!("lemma7_radius must be positive, got {r}"));
                    }
                }
            }
            Experiment::Mean | Experiment::Tukey => {}
        }
        if matches!(self.experiment, Experiment::Covariance | Experiment::Pca) {
            // the σ oracle needs fourth moments
            if let DistributionKind::StudentT { df, .. } = self.distribution.kind {
                if df <= 4.0 {
                    return fail(format!(
                        "student_t with df = {df} has no finite fourth moment; covariance experiments need df > 4"
                    ));
                }
            }
        }
        if self.tukey.n_dirs == 0 {
            return fail("tukey.n_dirs must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "experiment": "mean",
            "distribution": {"dim": 2, "mean": [0, 0], "kind": "gaussian", "scale": [[1, 0], [0, 1]]},
            "n_samples": 2000,
            "n_blocks": 64,
            "dim": 2,
            "n_trials": 10,
            "seed": 7
        }"#
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(c.n_blocks, BlockSpec::Fixed(64));
        assert_eq!(c.pool, PoolConfig::default());
        assert_eq!(c.resolved_estimators(), vec![EstimatorName::LmMom]);
        assert_eq!(c.contamination, ContaminationSpec::none());
        let again = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn block_spec_forms() {
        assert_eq!("12".parse::<BlockSpec>().unwrap(), BlockSpec::Fixed(12));
        assert_eq!(
            "auto(0.01)".parse::<BlockSpec>().unwrap(),
            BlockSpec::Auto { delta: 0.01 }
        );
        assert!("auto(x)".parse::<BlockSpec>().is_err());
        assert!("many".parse::<BlockSpec>().is_err());
        let json = serde_json::to_string(&BlockSpec::Auto { delta: 0.5 }).unwrap();
        assert_eq!(json, "\"auto(0.5)\"");
        let text = minimal().replace("\"n_blocks\": 64", "\"n_blocks\": \"auto(0.5)\"");
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c.resolve_blocks().unwrap(), 89);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            ("\"dim\": 2", "\"dim\": 3"),
            ("\"n_trials\": 10", "\"n_trials\": 0"),
            ("\"n_blocks\": 64", "\"n_blocks\": 5000"),
            ("\"n_blocks\": 64", "\"n_blocks\": \"auto(1.5)\""),
            ("\"seed\": 7", "\"seed\": 7, \"bogus\": 1"),
            ("\"seed\": 7", "\"seed\": 7, \"estimators\": [\"cov_mom\"]"),
            ("\"seed\": 7", "\"seed\": 7, \"estimators\": [\"median\"]"),
            ("\"experiment\": \"mean\"", "\"experiment\": \"pca\""),
        ];
        for (from, to) in cases {
            let text = minimal().replace(from, to);
            let err = ExperimentConfig::from_json(&text).unwrap_err();
            assert!(err.is_config(), "{to}: {err}");
        }
    }

    #[test]
    fn names_round_trip() {
        for e in [
            EstimatorName::LmMom,
            EstimatorName::CoordwiseMom,
            EstimatorName::GeomedianMom,
            EstimatorName::TukeyMom,
            EstimatorName::EmpiricalMean,
            EstimatorName::CovMom,
            EstimatorName::EmpiricalCov,
        ] {
            assert_eq!(e.name().parse::<EstimatorName>().unwrap(), e);
        }
        assert_eq!("lemma7".parse::<Experiment>().unwrap(), Experiment::Lemma7);
    }
}

//! Experiment configuration: a single TOML file describing the task, the
//! (k, alpha) grid, the learner, the population or dataset, replicate
//! counts, and output location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cf::CfParams;
use crate::dataset::Schema;
use crate::distributions::PopulationSpec;
use crate::engine::{Alpha, QualityKind};
use crate::error::Error;
use crate::learners::LearnerSpec;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Supervised,
    Cf,
    Theory,
}

/// The sweep axes. Every (k, alpha) pair is run for every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: Vec<usize>,
    pub alpha: Vec<Alpha>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { k: vec![1], alpha: vec![Alpha::Finite(1.0)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
}

/// Collaborative-filtering market settings; the sweep reuses `grid.k` for
/// the recommender count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfConfig {
    pub items: usize,
    pub users: usize,
    pub rounds: usize,
    #[serde(default = "CfConfig::default_gamma")]
    pub gamma: f64,
    #[serde(default = "CfConfig::default_lambda")]
    pub lambda: f64,
    #[serde(default = "CfConfig::default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "CfConfig::default_generating_rank")]
    pub generating_rank: usize,
    #[serde(default)]
    pub optimistic_unpulled: bool,
}

impl CfConfig {
    fn default_gamma() -> f64 {
        0.1
    }
    fn default_lambda() -> f64 {
        1e-4
    }
    fn default_latent_dim() -> usize {
        4
    }
    fn default_generating_rank() -> usize {
        3
    }

    pub fn params(&self, k: usize, rng_seed: u64) -> CfParams {
        CfParams {
            items: self.items,
            users: self.users,
            k,
            rounds: self.rounds,
            rng_seed,
            latent_dim: self.latent_dim,
            gamma: self.gamma,
            lambda: self.lambda,
            generating_rank: self.generating_rank,
            optimistic_unpulled: self.optimistic_unpulled,
        }
    }
}

fn default_replicates() -> usize {
    5
}
fn default_rounds() -> usize {
    1000
}
fn default_seed_size() -> usize {
    3
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_test_points() -> usize {
    500
}
fn default_learner() -> LearnerSpec {
    LearnerSpec::NearestNeighbor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub rng_seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_seed_size")]
    pub seed_size: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Held-out points sampled for evaluation when the population is
    /// synthetic (empirical datasets use their test split instead).
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_learner")]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub cf: Option<CfConfig>,
    /// Per-round alpha redrawn from a standard normal (negatives clamped).
    #[serde(default)]
    pub per_user_alpha: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.grid.k.is_empty() || self.grid.alpha.is_empty() {
            return Err(Error::Config("grid.k and grid.alpha must be nonempty".into()));
        }
        if self.grid.k.iter().any(|&k| k < 1) {
            return Err(Error::Config("grid.k entries must be >= 1".into()));
        }
        for a in &self.grid.alpha {
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        match self.task {
            TaskKind::Supervised => {
                if self.rounds < 1 {
                    return Err(Error::Config("rounds must be >= 1".into()));
                }
                match (&self.population, &self.dataset) {
                    (Some(p), None) => p.validate().map_err(|e| Error::Config(e.to_string()))?,
                    (None, Some(_)) => {}
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "specify either a population or a dataset, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "supervised task needs a population or a dataset".into(),
                        ))
                    }
                }
                self.learner.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
            TaskKind::Cf => {
                if self.cf.is_none() {
                    return Err(Error::Config("cf task needs a [cf] section".into()));
                }
            }
            TaskKind::Theory => {}
        }
        Ok(())
    }

    /// Softmax quality appropriate to the configured population: indicator
    /// for classification sources, negative loss for regression sources.
    pub fn quality_kind(&self) -> QualityKind {
        match &self.population {
            Some(spec) if spec.num_classes() == 0 => QualityKind::NegativeLoss,
            _ => QualityKind::ClassificationIndicator,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    #[test]
    fn minimal_supervised_config_parses_with_defaults() {
        let cfg = parse(
            r#"
            task = "supervised"
            rng_seed = 42
            [grid]
            k = [1, 2, 4]
            alpha = [0.0, 1.0, "inf"]
            [population]
            kind = "gaussian_mixture"
            classes = 5
            separation = 1.0
            noise = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 5);
        assert_eq!(cfg.seed_size, 3);
        assert_eq!(cfg.grid.alpha[2], Alpha::Infinite);
        assert_eq!(cfg.quality_kind(), QualityKind::ClassificationIndicator);
    }

    #[test]
    fn regression_population_switches_quality_kind() {
        let cfg = parse(
            r#"
            task = "supervised"
            rng_seed = 1
            [grid]
            k = [2]
            alpha = ["inf"]
            [population]
            kind = "uniform_band"
            delta = 0.3
            [learner]
            kind = "ols"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.quality_kind(), QualityKind::NegativeLoss);
        assert_eq!(cfg.learner, LearnerSpec::Ols);
    }

    #[test]
    fn cf_config_parses() {
        let cfg = parse(
            r#"
            task = "cf"
            rng_seed = 3
            [grid]
            k = [1, 2, 4, 8]
            alpha = [0.0]
            [cf]
            items = 8
            users = 16
            rounds = 20000
            "#,
        )
        .unwrap();
        let params = cfg.cf.as_ref().unwrap().params(4, 9);
        assert_eq!(params.k, 4);
        assert_eq!(params.gamma, 0.1);
        assert_eq!(params.lambda, 1e-4);
        assert_eq!(params.latent_dim, 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(parse("task = \"supervised\"\nrng_seed = 1\n").is_err());
        assert!(parse(
            r#"
            task = "supervised"
            rng_seed = 1
            replicates = 0
            [population]
            kind = "noisy_constant"
            eps = 0.3
            "#
        )
        .is_err());
        assert!(parse(
            r#"
            task = "cf"
            rng_seed = 1
            "#
        )
        .is_err());
        assert!(parse(
            r#"
            task = "supervised"
            rng_seed = 1
            [grid]
            k = []
            alpha = [1.0]
            [population]
            kind = "noisy_constant"
            eps = 0.3
            "#
        )
        .is_err());
    }

    #[test]
    fn load_reports_missing_file_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/config.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/config.toml"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let f = {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(
                br#"
                task = "supervised"
                rng_seed = 7
                rounds = 100
                [grid]
                k = [2]
                alpha = [0.5]
                [population]
                kind = "noisy_constant"
                eps = 0.3
                "#,
            )
            .unwrap();
            f
        };
        let cfg = ExperimentConfig::load(f.path()).unwrap();
        let echoed = toml::to_string(&cfg).unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&echoed).unwrap();
        assert_eq!(cfg, reparsed);
    }
}

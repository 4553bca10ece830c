//! Competing predictors behind a uniform fit/predict/observe contract:
//! 1-nearest-neighbor, multinomial logistic regression, a one-hidden-layer
//! MLP, and scalar ordinary least squares.

mod logistic;
mod mlp;
mod nn;
mod ols;

pub use logistic::{Logistic, LogisticParams};
pub use mlp::{Mlp, MlpGradient, MlpParams};
pub use nn::NearestNeighbor;
pub use ols::Ols;

use serde::{Deserialize, Serialize};

use crate::data::{Datum, Label};
use crate::rng::SimRng;
use crate::Result;

/// Which learner each competitor runs, plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    NearestNeighbor,
    Logistic(LogisticParams),
    Mlp(MlpParams),
    Ols,
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Logistic(p) => p.validate(),
            LearnerSpec::Mlp(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// One predictor's training set and fitted model. A learner is owned by
/// exactly one competition run; evaluation snapshots are deep copies.
#[derive(Debug, Clone)]
pub enum Learner {
    NearestNeighbor(NearestNeighbor),
    Logistic(Logistic),
    Mlp(Mlp),
    Ols(Ols),
}

impl Learner {
    /// Builds an unfitted learner. `rng` seeds the learner-owned stream
    /// used for initialization, retrain shuffling, and stochastic predict
    /// fallbacks.
    pub fn from_spec(spec: &LearnerSpec, rng: SimRng) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            LearnerSpec::NearestNeighbor => Learner::NearestNeighbor(NearestNeighbor::new()),
            LearnerSpec::Logistic(p) => Learner::Logistic(Logistic::new(p.clone(), rng)),
            LearnerSpec::Mlp(p) => Learner::Mlp(Mlp::new(p.clone(), rng)),
            LearnerSpec::Ols => Learner::Ols(Ols::new()),
        })
    }

    /// Trains on exactly the seed set. Parametric kinds accept an empty
    /// seed (prediction falls back to a uniform-random class until data
    /// arrives); 1-NN requires at least one point.
    pub fn fit_seed(&mut self, seed: &[Datum]) -> Result<()> {
        match self {
            Learner::NearestNeighbor(l) => l.fit_seed(seed),
            Learner::Logistic(l) => l.fit_seed(seed),
            Learner::Mlp(l) => l.fit_seed(seed),
            Learner::Ols(l) => l.fit_seed(seed),
        }
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<Label> {
        match self {
            Learner::NearestNeighbor(l) => l.predict(x),
            Learner::Logistic(l) => l.predict(x),
            Learner::Mlp(l) => l.predict(x),
            Learner::Ols(l) => l.predict(x),
        }
    }

    /// Appends the datum and retrains per the learner's cadence.
    pub fn observe(&mut self, datum: Datum) -> Result<()> {
        match self {
            Learner::NearestNeighbor(l) => l.observe(datum),
            Learner::Logistic(l) => l.observe(datum),
            Learner::Mlp(l) => l.observe(datum),
            Learner::Ols(l) => l.observe(datum),
        }
    }

    pub fn dataset_len(&self) -> usize {
        match self {
            Learner::NearestNeighbor(l) => l.dataset_len(),
            Learner::Logistic(l) => l.dataset_len(),
            Learner::Mlp(l) => l.dataset_len(),
            Learner::Ols(l) => l.dataset_len(),
        }
    }

    /// Number of retrains triggered by observations (not the seed fit).
    pub fn retrain_count(&self) -> usize {
        match self {
            Learner::Logistic(l) => l.retrain_count(),
            Learner::Mlp(l) => l.retrain_count(),
            // Non-parametric and closed-form kinds refit on every datum.
            Learner::NearestNeighbor(l) => l.dataset_len(),
            Learner::Ols(l) => l.dataset_len(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(crate::Error::invalid(format!(
            "feature dimension mismatch: expected {expected}, got {got}"
        )))
    } else {
        Ok(())
    }
}

//! Simulation library for markets of competing ML predictors.
//!
//! A stream of users chooses among `k` predictors through a softmax
//! selection rule with information efficiency `alpha`; the winner of each
//! round receives the user's labeled datum and retrains. The crate bundles
//! the round-based competition engine, the learners that compete in it,
//! synthetic and empirical population sources, the metrics reported from
//! traces, a collaborative-filtering market variant, closed-form bound
//! evaluators with Monte Carlo verifiers, and the sweep/IO layer behind the
//! CLI.

pub mod cf;
pub mod config;
pub mod data;
pub mod dataset;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod sweep;
pub mod theory;
pub mod verify;

pub use data::{Datum, Label};
pub use engine::{Alpha, CompetitionConfig, CompetitionTrace, SelectionRule};
pub use error::Error;
pub use learners::{Learner, LearnerSpec};

pub type Result<T> = std::result::Result<T, Error>;

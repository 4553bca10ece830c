//! The round-based competition. Each round draws one user from the
//! population, every predictor answers, and a softmax over prediction
//! quality (scaled by the information efficiency `alpha`) picks the winner,
//! who alone receives the user's datum and retrains. The baseline variant
//! keeps the biased selection but hands the winner a fresh i.i.d. draw
//! instead, isolating the effect of data being routed by quality.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Datum, Label};
use crate::distributions::PopulationSource;
use crate::error::Error;
use crate::learners::{Learner, LearnerSpec};
use crate::rng::{self, SimRng};
use crate::Result;

/// Information efficiency of user choice. `Infinite` is a sentinel for the
/// argmax limit (uniform tie-break), kept out of `f64` to avoid `exp`
/// overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Finite(f64),
    Infinite,
}

impl Alpha {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Alpha::Finite(a) if !(a >= 0.0 && a.is_finite()) => {
                Err(Error::invalid("alpha must be a finite nonnegative number or \"inf\""))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Alpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "Infinity" => Ok(Alpha::Infinite),
            v => {
                let a: f64 = v
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse alpha from {s:?}")))?;
                let alpha = Alpha::Finite(a);
                alpha.validate()?;
                Ok(alpha)
            }
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Finite(a) => ser.serialize_f64(*a),
            Alpha::Infinite => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let alpha = match Raw::deserialize(de)? {
            Raw::Number(a) => Alpha::Finite(a),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        alpha.validate().map_err(serde::de::Error::custom)?;
        Ok(alpha)
    }
}

/// How a prediction is scored before entering the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityKind {
    /// 1 if the predicted class equals the label, else 0.
    ClassificationIndicator,
    /// Negative squared error, so larger is still better.
    NegativeLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub alpha: Alpha,
    /// Redraw alpha each round from a standard normal.
    #[serde(default)]
    pub per_user_alpha: bool,
    /// Clamp negative per-user draws to 0.
    #[serde(default = "default_true")]
    pub clamp_negative: bool,
    pub quality_kind: QualityKind,
}

fn default_true() -> bool {
    true
}

impl SelectionRule {
    pub fn classification(alpha: Alpha) -> Self {
        SelectionRule {
            alpha,
            per_user_alpha: false,
            clamp_negative: true,
            quality_kind: QualityKind::ClassificationIndicator,
        }
    }

    pub fn regression(alpha: Alpha) -> Self {
        SelectionRule {
            alpha,
            per_user_alpha: false,
            clamp_negative: true,
            quality_kind: QualityKind::NegativeLoss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()
    }

    fn quality(&self, prediction: &Label, truth: &Label) -> Result<f64> {
        match self.quality_kind {
            QualityKind::ClassificationIndicator => {
                let (p, t) = match (prediction.class(), truth.class()) {
                    (Some(p), Some(t)) => (p, t),
                    _ => return Err(Error::invalid("indicator quality needs class labels")),
                };
                Ok(if p == t { 1.0 } else { 0.0 })
            }
            QualityKind::NegativeLoss => {
                let (p, t) = match (prediction.real(), truth.real()) {
                    (Some(p), Some(t)) => (p, t),
                    _ => return Err(Error::invalid("loss quality needs real labels")),
                };
                Ok(-(p - t) * (p - t))
            }
        }
    }
}

/// Exact selection distribution: softmax(alpha * q), with the argmax limit
/// at alpha = infinity.
pub fn selection_probs(qualities: &[f64], alpha: Alpha) -> Result<Vec<f64>> {
    if qualities.is_empty() {
        return Err(Error::invalid("empty quality vector"));
    }
    if qualities.iter().any(|q| !q.is_finite()) {
        return Err(Error::invalid("qualities must be finite"));
    }
    alpha.validate()?;
    let max = qualities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match alpha {
        Alpha::Infinite => {
            let ties = qualities.iter().filter(|&&q| q == max).count() as f64;
            Ok(qualities.iter().map(|&q| if q == max { 1.0 / ties } else { 0.0 }).collect())
        }
        Alpha::Finite(a) => {
            // Shift by the max before exponentiating for numerical safety;
            // softmax is shift-invariant.
            let weights: Vec<f64> = qualities.iter().map(|&q| (a * (q - max)).exp()).collect();
            let sum: f64 = weights.iter().sum();
            Ok(weights.iter().map(|w| w / sum).collect())
        }
    }
}

/// Samples the winning index. Consumes exactly one uniform variate from
/// `rng` regardless of k or alpha.
pub fn select_winner(qualities: &[f64], alpha: Alpha, rng: &mut SimRng) -> Result<usize> {
    let probs = selection_probs(qualities, alpha)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionConfig {
    /// Number of competing predictors.
    pub k: usize,
    /// i.i.d. warm-start samples per predictor.
    pub seed_size: usize,
    /// Number of user rounds.
    pub rounds: usize,
    pub rng_seed: u64,
    pub learner: LearnerSpec,
    pub selection: SelectionRule,
    /// Fraction of an empirical dataset carved off for held-out evaluation
    /// before the user stream is built.
    pub test_fraction: f64,
}

impl CompetitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.rounds < 1 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        self.selection.validate()?;
        self.learner.validate()
    }
}

/// One round's full outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// The user's datum (the real one, even in baseline mode).
    pub datum: Datum,
    pub predictions: Vec<Label>,
    pub qualities: Vec<f64>,
    pub winner: usize,
    /// Alpha in effect this round (differs from the rule's under the
    /// per-user variant).
    pub alpha: Alpha,
}

#[derive(Debug, Clone)]
pub struct CompetitionTrace {
    pub config: CompetitionConfig,
    pub baseline: bool,
    pub records: Vec<RoundRecord>,
    /// Dataset sizes per predictor, after seeding and after each round;
    /// sizes[t][i] = |D_i| after round t (row 0 is post-seed).
    pub sizes: Vec<Vec<usize>>,
    pub final_learners: Vec<Learner>,
}

impl PartialEq for CompetitionTrace {
    // Learners carry rng state and don't compare; round records plus size
    // trajectories pin the trace down for determinism checks.
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.baseline == other.baseline
            && self.records == other.records
            && self.sizes == other.sizes
    }
}

impl CompetitionTrace {
    pub fn final_sizes(&self) -> &[usize] {
        self.sizes.last().expect("trace has a post-seed size row")
    }

    /// Checks sum_i |D_i| = k*s + t after every round.
    pub fn conserves_data(&self) -> bool {
        self.sizes.iter().enumerate().all(|(t, row)| {
            row.iter().sum::<usize>() == self.config.k * self.config.seed_size + t
        })
    }

    /// Mean winner quality on the true datum over all rounds.
    pub fn mean_user_quality(&self) -> f64 {
        let total: f64 = self.records.iter().map(|r| r.qualities[r.winner]).sum();
        total / self.records.len() as f64
    }
}

/// Runs the competition: winners keep the data of the users who chose them.
pub fn run_competition(
    config: &CompetitionConfig,
    source: &mut PopulationSource,
) -> Result<CompetitionTrace> {
    run(config, source, false)
}

/// Runs the control: winners are selected identically but receive a fresh
/// i.i.d. datum, so dataset growth keeps the selection bias while the
/// routed data stays unbiased.
pub fn run_baseline(
    config: &CompetitionConfig,
    source: &mut PopulationSource,
) -> Result<CompetitionTrace> {
    run(config, source, true)
}

fn run(
    config: &CompetitionConfig,
    source: &mut PopulationSource,
    baseline: bool,
) -> Result<CompetitionTrace> {
    config.validate()?;
    // Independent substreams with a fixed role assignment keep traces
    // reproducible and make the two modes consume the same user stream.
    let mut datum_rng = rng::substream(config.rng_seed, 0);
    let mut select_rng = rng::substream(config.rng_seed, 1);
    let mut alpha_rng = rng::substream(config.rng_seed, 2);
    let mut fresh_rng = rng::substream(config.rng_seed, 3);

    let mut learners = Vec::with_capacity(config.k);
    for i in 0..config.k {
        let mut learner =
            Learner::from_spec(&config.learner, rng::substream(config.rng_seed, 1000 + i as u64))?;
        let seed: Vec<Datum> = (0..config.seed_size)
            .map(|j| source.sample(0, &mut datum_rng).map_err(|_| seed_exhausted(i, j)))
            .collect::<Result<_>>()?;
        learner.fit_seed(&seed)?;
        learners.push(learner);
    }

    let mut records = Vec::with_capacity(config.rounds);
    let mut sizes = Vec::with_capacity(config.rounds + 1);
    sizes.push(learners.iter().map(|l| l.dataset_len()).collect::<Vec<_>>());

    for t in 1..=config.rounds {
        let datum = source.sample(t, &mut datum_rng)?;
        let alpha = if config.selection.per_user_alpha {
            let raw: f64 = StandardNormal.sample(&mut alpha_rng);
            Alpha::Finite(if config.selection.clamp_negative { raw.max(0.0) } else { raw })
        } else {
            config.selection.alpha
        };
        let predictions: Vec<Label> = learners
            .iter_mut()
            .map(|l| l.predict(&datum.features))
            .collect::<Result<_>>()?;
        let qualities: Vec<f64> = predictions
            .iter()
            .map(|p| config.selection.quality(p, &datum.label))
            .collect::<Result<_>>()?;
        let winner = select_winner(&qualities, alpha, &mut select_rng)?;
        let awarded = if baseline {
            match source {
                // Fresh i.i.d. draw for the winner; the real user's datum is
                // discarded by the market but still recorded in the trace.
                PopulationSource::Synthetic(_) => source.sample(t, &mut fresh_rng)?,
                // A finite pool has no second independent stream; take the
                // next unseen user instead.
                PopulationSource::Empirical(_) => source.sample(t, &mut datum_rng)?,
            }
        } else {
            datum.clone()
        };
        learners[winner].observe(awarded)?;
        sizes.push(learners.iter().map(|l| l.dataset_len()).collect());
        records.push(RoundRecord { round: t, datum, predictions, qualities, winner, alpha });
    }

    let trace = CompetitionTrace {
        config: config.clone(),
        baseline,
        records,
        sizes,
        final_learners: learners,
    };
    debug_assert!(trace.conserves_data() || baseline_uses_pool(&trace, source));
    Ok(trace)
}

fn seed_exhausted(predictor: usize, j: usize) -> Error {
    Error::invalid(format!(
        "population exhausted while seeding predictor {predictor} (sample {j})"
    ))
}

fn baseline_uses_pool(trace: &CompetitionTrace, source: &PopulationSource) -> bool {
    trace.baseline && matches!(source, PopulationSource::Empirical(_))
}

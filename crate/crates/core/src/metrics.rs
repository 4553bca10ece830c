//! Reported quantities: class-conditional specialization matrices,
//! population accuracy/risk on a held-out split, per-round user quality,
//! deltas against the unbiased-feedback baseline, and risk ratios between
//! a k-predictor market and a monopoly.

use ndarray::Array2;

use crate::data::{Dataset, Label};
use crate::engine::CompetitionTrace;
use crate::error::Error;
use crate::learners::Learner;
use crate::Result;

/// Fraction of the test set a predictor classifies correctly.
pub fn population_accuracy(learner: &Learner, test: &Dataset) -> Result<f64> {
    let mut l = learner.clone();
    let mut hits = 0usize;
    for d in &test.data {
        if l.predict(&d.features)? == d.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

/// Risk on the test set: error rate for classification, mean squared error
/// for regression (mixed-label test sets are rejected upstream by Dataset).
pub fn population_risk(learner: &Learner, test: &Dataset) -> Result<f64> {
    if test.num_classes > 0 {
        return Ok(1.0 - population_accuracy(learner, test)?);
    }
    let mut l = learner.clone();
    let mut loss = 0.0;
    for d in &test.data {
        let y = d
            .label
            .real()
            .ok_or_else(|| Error::invalid("regression risk needs real labels"))?;
        let p = match l.predict(&d.features)? {
            Label::Real(p) => p,
            Label::Class(_) => return Err(Error::invalid("classifier scored on regression data")),
        };
        loss += (p - y) * (p - y);
    }
    Ok(loss / test.len() as f64)
}

fn class_conditional_accuracies(
    learners: &[Learner],
    test: &Dataset,
) -> Result<Array2<f64>> {
    let classes = test.num_classes;
    let k = learners.len();
    let mut counts = vec![0usize; classes];
    for d in &test.data {
        if let Some(c) = d.label.class() {
            counts[c] += 1;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass { class: c });
    }
    let mut acc = Array2::zeros((classes, k));
    for (j, learner) in learners.iter().enumerate() {
        let mut l = learner.clone();
        for d in &test.data {
            let c = d.label.class().expect("class counts verified above");
            if l.predict(&d.features)? == d.label {
                acc[(c, j)] += 1.0;
            }
        }
        for c in 0..classes {
            acc[(c, j)] /= counts[c] as f64;
        }
    }
    Ok(acc)
}

fn center_rows(mut m: Array2<f64>) -> Array2<f64> {
    let k = m.ncols() as f64;
    for mut row in m.rows_mut() {
        let mean = row.sum() / k;
        row.mapv_inplace(|v| v - mean);
    }
    m
}

/// Specialization heatmap: entry (c, j) is predictor j's class-c accuracy
/// minus the across-predictor mean, so each row sums to zero.
pub fn specialization_matrix(learners: &[Learner], test: &Dataset) -> Result<Array2<f64>> {
    if learners.is_empty() {
        return Err(Error::invalid("specialization needs at least one predictor"));
    }
    if test.num_classes == 0 {
        return Err(Error::invalid("specialization is defined for classification tasks"));
    }
    Ok(center_rows(class_conditional_accuracies(learners, test)?))
}

/// Specialization over a declared categorical feature column instead of the
/// label: rows are the distinct values of that column (ascending), entries
/// are group-conditional overall accuracies, centered per row.
pub fn grouped_specialization_matrix(
    learners: &[Learner],
    test: &Dataset,
    feature_col: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    if learners.is_empty() {
        return Err(Error::invalid("specialization needs at least one predictor"));
    }
    if feature_col >= test.feature_dim {
        return Err(Error::invalid(format!(
            "feature column {feature_col} out of range for dimension {}",
            test.feature_dim
        )));
    }
    let mut values: Vec<f64> = test.data.iter().map(|d| d.features[feature_col]).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let mut acc = Array2::zeros((values.len(), learners.len()));
    for (j, learner) in learners.iter().enumerate() {
        let mut l = learner.clone();
        for (g, &v) in values.iter().enumerate() {
            let mut hits = 0usize;
            let mut n = 0usize;
            for d in test.data.iter().filter(|d| d.features[feature_col] == v) {
                n += 1;
                if l.predict(&d.features)? == d.label {
                    hits += 1;
                }
            }
            acc[(g, j)] = hits as f64 / n as f64;
        }
    }
    Ok((values, center_rows(acc)))
}

/// Mean winner quality over the trace's rounds: correctness fraction for
/// classification, mean negative loss for regression.
pub fn user_quality(trace: &CompetitionTrace) -> f64 {
    trace.mean_user_quality()
}

fn check_comparable(a: &CompetitionTrace, b: &CompetitionTrace) -> Result<()> {
    let (ca, cb) = (&a.config, &b.config);
    if ca.k != cb.k
        || ca.seed_size != cb.seed_size
        || ca.rounds != cb.rounds
        || ca.learner != cb.learner
    {
        return Err(Error::ConfigMismatch(
            "traces differ in k, seed size, rounds, or learner".into(),
        ));
    }
    Ok(())
}

/// Mean over predictors of (competition accuracy − baseline accuracy) on
/// the test set, in percentage points. Final models are evaluated.
pub fn population_accuracy_delta(
    trace: &CompetitionTrace,
    baseline: &CompetitionTrace,
    test: &Dataset,
) -> Result<f64> {
    check_comparable(trace, baseline)?;
    let mut delta = 0.0;
    for (a, b) in trace.final_learners.iter().zip(&baseline.final_learners) {
        delta += population_accuracy(a, test)? - population_accuracy(b, test)?;
    }
    Ok(100.0 * delta / trace.config.k as f64)
}

/// Risk of a trace: mean risk of its final predictors on the test set.
pub fn trace_risk(trace: &CompetitionTrace, test: &Dataset) -> Result<f64> {
    let mut risk = 0.0;
    for l in &trace.final_learners {
        risk += population_risk(l, test)?;
    }
    Ok(risk / trace.final_learners.len() as f64)
}

/// Ratio of replicate-mean risks; `infinite` flags a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRatio {
    pub ratio: f64,
    pub infinite: bool,
}

/// Mean k-market risk over replicates divided by mean monopoly risk.
pub fn risk_ratio(
    k_traces: &[CompetitionTrace],
    single_traces: &[CompetitionTrace],
    test: &Dataset,
) -> Result<RiskRatio> {
    if k_traces.is_empty() || single_traces.is_empty() {
        return Err(Error::invalid("risk ratio needs nonempty replicate sets"));
    }
    let num = mean(&k_traces.iter().map(|t| trace_risk(t, test)).collect::<Result<Vec<_>>>()?);
    let den =
        mean(&single_traces.iter().map(|t| trace_risk(t, test)).collect::<Result<Vec<_>>>()?);
    if den == 0.0 {
        return Ok(RiskRatio { ratio: f64::INFINITY, infinite: true });
    }
    Ok(RiskRatio { ratio: num / den, infinite: false })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Replicate aggregation: (mean, standard error), SE = sample std / sqrt(n).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

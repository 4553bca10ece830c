//! Closed-form risk-ratio bounds, sweet-spot interval, random-walk survival
//! and sequential K-means quanta, each paired with a Monte Carlo or
//! exact-enumeration verifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::SimRng;
use crate::Result;

/// Constant in the seed-size term of the least-squares risk-ratio floor.
/// 1764 * 4, from the tail-probability and truncated-variance factors.
pub const OLS_GAP_CONSTANT: f64 = 7056.0;

/// Symbols shared by the bound evaluators. Fields are only read by the
/// bounds that need them.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Per-predictor seed set size.
    pub s: usize,
    /// Number of competing predictors.
    pub k: usize,
    /// Information efficiency of the selection rule.
    pub alpha: f64,
    /// Noise level / weak-learner margin, depending on the bound.
    pub eps: f64,
    /// Accuracy gap between a one- and two-predictor market.
    pub delta: f64,
    /// Pairwise correctness covariance.
    pub rho: f64,
}

/// Which closed-form bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// Floor on the average error rate when a rare class can be missing
    /// from a seed set under perfect information.
    RareClassRiskFloor,
    /// Risk-ratio lower bound for two nearest-neighbor predictors.
    NearestNeighborPair,
    /// Risk-ratio lower bound for least-squares predictors, any alpha > 0.
    LeastSquaresSeed,
    /// Risk-ratio limit for least-squares predictors under perfect
    /// information: 2k / (k + 1).
    PerfectInfoLeastSquares,
}

/// Evaluates the closed-form bound of the given kind at `params`.
pub fn bound_value(kind: BoundKind, params: &TheoryParams) -> Result<f64> {
    let &TheoryParams { s, k, alpha, .. } = params;
    match kind {
        BoundKind::RareClassRiskFloor => {
            if s < 1 || k < 2 {
                return Err(Error::Precondition("rare-class floor needs s >= 1, k >= 2".into()));
            }
            let (s, k) = (s as f64, k as f64);
            Ok((1.0 - (-(k - 1.0)).exp()) / (4.0 * k * s))
        }
        BoundKind::NearestNeighborPair => {
            if s < 2 {
                return Err(Error::Precondition("nearest-neighbor pair bound needs s >= 2".into()));
            }
            if alpha <= 2.0_f64.ln() {
                return Err(Error::Precondition(
                    "nearest-neighbor pair bound needs alpha > ln 2".into(),
                ));
            }
            let s = s as f64;
            let lead = 1.0 / (54.0 * (2.0 * s).sqrt());
            let decay = (8.0 / (9.0 * s.sqrt())).powf(s / 2.0);
            let gap = (1.0 - 2.0 / (2.0 + alpha.exp())).powi(2);
            Ok(1.0 + lead * decay * gap)
        }
        BoundKind::LeastSquaresSeed => {
            if s < 1 {
                return Err(Error::Precondition("least-squares bound needs s >= 1".into()));
            }
            if alpha <= 0.0 {
                return Err(Error::Precondition("least-squares bound needs alpha > 0".into()));
            }
            if k < 2 {
                return Err(Error::Precondition("least-squares bound needs k >= 2".into()));
            }
            Ok(1.0 + 1.0 / (OLS_GAP_CONSTANT * (s as f64).powf(1.5)))
        }
        BoundKind::PerfectInfoLeastSquares => {
            if k < 1 {
                return Err(Error::Precondition("perfect-info ratio needs k >= 1".into()));
            }
            let k = k as f64;
            Ok(2.0 * k / (k + 1.0))
        }
    }
}

/// Lazy biased random walk on the integers: step down with probability `q`,
/// up with `p`, stay with `r`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WalkParams {
    pub q: f64,
    pub p: f64,
    pub r: f64,
}

impl WalkParams {
    pub fn new(q: f64, p: f64, r: f64) -> Result<Self> {
        let sum = q + p + r;
        if q < 0.0 || p < 0.0 || r < 0.0 || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "walk increments must be a probability vector, got ({q}, {p}, {r})"
            )));
        }
        Ok(WalkParams { q, p, r })
    }
}

/// Survival probability of the walk against absorption at the origin:
/// 1 - 2q/(q+p) when the conditional down-step probability q/(q+p) is
/// below 1/2, otherwise 0.
///
/// Note this is the chance that a walk leaving the origin never comes
/// back (first move up, then never hitting 0 from 1). For a walk already
/// started at 1 the classical value is the larger 1 - q/p; the Monte
/// Carlo verifier simulates the no-return event this formula describes.
pub fn rw_survival_prob(walk: WalkParams) -> f64 {
    if walk.q == 0.0 {
        return 1.0; // never decreases, includes the all-stay walk
    }
    let down = walk.q / (walk.q + walk.p);
    if down >= 0.5 {
        0.0
    } else {
        1.0 - 2.0 * down
    }
}

/// Monte Carlo estimate of the no-return probability over a finite horizon
/// of moves, with its standard error. Stay-steps don't change the state,
/// so the walk is simulated in its reduced (q/(q+p), p/(q+p)) form: a
/// trial survives when the first move is up and the position stays
/// positive for `horizon` further moves.
pub fn rw_survival_mc(
    walk: WalkParams,
    horizon: usize,
    trials: usize,
    rng: &mut SimRng,
) -> (f64, f64) {
    let down = if walk.q == 0.0 { 0.0 } else { walk.q / (walk.q + walk.p) };
    let mut survived = 0u64;
    for _ in 0..trials {
        let mut pos: i64 = 0;
        let mut alive = true;
        for _ in 0..horizon {
            if rng.random::<f64>() < down {
                pos -= 1;
            } else {
                pos += 1;
            }
            if pos <= 0 {
                alive = false;
                break;
            }
        }
        if alive {
            survived += 1;
        }
    }
    let p_hat = survived as f64 / trials as f64;
    let se = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    (p_hat, se)
}

/// Exact variance of Bin(2n, 1/2) conditioned on [n-c, n+c], by direct
/// enumeration of the (2c+1)-point support, together with the lower bound
/// c/2 it is guaranteed to dominate.
pub fn truncated_binomial_variance(n: u64, c: u64) -> Result<(f64, f64)> {
    if c == 0 || c >= n {
        return Err(Error::invalid(format!(
            "truncated binomial variance requires n > c > 0, got n={n}, c={c}"
        )));
    }
    // C(2n, x) for x in [n-c, n+c]; n <= 26 keeps C(2n, n) exact in f64.
    let mut weights = Vec::with_capacity((2 * c + 1) as usize);
    for x in (n - c)..=(n + c) {
        weights.push(binomial(2 * n, x));
    }
    let total: f64 = weights.iter().sum();
    let mean: f64 = weights
        .iter()
        .zip((n - c)..=(n + c))
        .map(|(w, x)| w * x as f64)
        .sum::<f64>()
        / total;
    let var: f64 = weights
        .iter()
        .zip((n - c)..=(n + c))
        .map(|(w, x)| w * (x as f64 - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok((var, c as f64 / 2.0))
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Both ends of the sweet-spot interval for the information efficiency,
/// plus whether the covariance condition for its existence holds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweetSpotInterval {
    /// Upper bound on the lower edge `c1` (natural log).
    pub c1_upper: f64,
    /// Lower bound on the upper edge `c2` (natural log).
    pub c2_lower: f64,
    /// Covariance condition rho < A1 - (A1 - delta)^2 - 6*delta.
    pub valid: bool,
}

/// Evaluates the interval of information efficiencies in which an interior
/// number of predictors maximizes expected prediction quality for users.
pub fn sweet_spot_interval(a1: f64, delta: f64, eps: f64, rho: f64) -> Result<SweetSpotInterval> {
    if !(a1 > 2.0 / 3.0 && a1 < 1.0) {
        return Err(Error::Precondition(format!("a1 must lie in (2/3, 1), got {a1}")));
    }
    if !(delta > 0.0 && delta < 1.0 / 6.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1/6), got {delta}")));
    }
    if !(eps < 1.0 / 14.0) {
        return Err(Error::Precondition(format!("eps must be below 1/14, got {eps}")));
    }
    let psi = a1 - (a1 - delta).powi(2);
    let denom = psi - rho - 2.0 * delta;
    if denom <= 0.0 {
        return Err(Error::Precondition(
            "interval is empty: psi - rho - 2*delta must be positive".into(),
        ));
    }
    let c2_num = (1.0 - 4.0 * eps) * a1;
    if c2_num <= 0.0 {
        return Err(Error::Precondition("upper edge undefined: (1-4*eps)*a1 <= 0".into()));
    }
    Ok(SweetSpotInterval {
        c1_upper: ((psi - rho) / denom).ln(),
        c2_lower: (c2_num / (1.0 - a1)).ln(),
        valid: rho < psi - 6.0 * delta,
    })
}

/// Expected prediction quality for users in the many-predictors limit when
/// every predictor is a weak learner with accuracy 1/2 + eps:
/// e^alpha / (e^alpha + 1 - chi) with chi = 4*eps / (2*eps + 1).
pub fn weak_pool_quality(alpha: f64, eps: f64) -> Result<f64> {
    if !(0.0..1.0 / 14.0).contains(&eps) {
        return Err(Error::Precondition(format!("eps must lie in [0, 1/14), got {eps}")));
    }
    if alpha < 0.0 {
        return Err(Error::Precondition("alpha must be nonnegative".into()));
    }
    let chi = 4.0 * eps / (2.0 * eps + 1.0);
    let ea = alpha.exp();
    Ok(ea / (ea + 1.0 - chi))
}

/// One-round Monte Carlo of a pool of `k` weak predictors: each is correct
/// independently with probability 1/2 + eps, the user picks via softmax over
/// the correctness indicators. Returns the winner-correct frequency and SE.
pub fn weak_pool_quality_mc(
    alpha: f64,
    eps: f64,
    k: usize,
    trials: usize,
    rng: &mut SimRng,
) -> (f64, f64) {
    let p = 0.5 + eps;
    let ea = alpha.exp();
    let mut correct = 0u64;
    for _ in 0..trials {
        let mut v = 0usize;
        for _ in 0..k {
            if rng.random::<f64>() < p {
                v += 1;
            }
        }
        // Pr(winner correct | v correct) = v*e^a / (v*e^a + (k - v)).
        let v = v as f64;
        let pr = v * ea / (v * ea + (k as f64 - v));
        if rng.random::<f64>() < pr {
            correct += 1;
        }
    }
    let p_hat = correct as f64 / trials as f64;
    let se = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    (p_hat, se)
}

/// Centroid fixed points of the sequential K-means process on
/// Uniform(1-delta, 1+delta): the uniform quantizer, centroid i at the
/// midpoint of the i-th of k equal cells. This is the unique configuration
/// where every centroid equals the mean of its own nearest-centroid cell.
/// Also returns the asymptotic mean squared error of predicting a fresh draw
/// with a uniformly chosen centroid, (2 - 1/k^2) * delta^2 / 3, which exceeds
/// the monopoly error delta^2/3 by the factor 2 - 1/k^2 >= 2k/(k+1).
pub fn sequential_kmeans_quanta(k: usize, delta: f64) -> (Vec<f64>, f64) {
    assert!(k >= 1 && delta > 0.0);
    let kf = k as f64;
    let quanta = (1..=k)
        .map(|i| 1.0 - delta + (2 * i - 1) as f64 * delta / kf)
        .collect();
    let mse = (2.0 - 1.0 / (kf * kf)) * delta * delta / 3.0;
    (quanta, mse)
}

/// Runs the closest-centroid running-mean process on Uniform(1-delta,
/// 1+delta) draws. Returns the sorted final centroids and the plug-in MSE of
/// predicting a fresh draw with a uniformly chosen centroid.
pub fn simulate_sequential_kmeans(
    k: usize,
    delta: f64,
    rounds: usize,
    seeds_per_center: usize,
    rng: &mut SimRng,
) -> (Vec<f64>, f64) {
    assert!(k >= 1 && rounds >= 1 && seeds_per_center >= 1);
    let draw = |rng: &mut SimRng| 1.0 - delta + 2.0 * delta * rng.random::<f64>();
    let mut centroids = vec![0.0f64; k];
    let mut counts = vec![seeds_per_center as f64; k];
    for c in centroids.iter_mut() {
        let mut sum = 0.0;
        for _ in 0..seeds_per_center {
            sum += draw(rng);
        }
        *c = sum / seeds_per_center as f64;
    }
    for _ in 0..rounds {
        let z = draw(rng);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, c) in centroids.iter().enumerate() {
            let d = (c - z).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        counts[best] += 1.0;
        centroids[best] += (z - centroids[best]) / counts[best];
    }
    centroids.sort_by(|a, b| a.total_cmp(b));
    let mse = plug_in_uniform_mse(&centroids, delta);
    (centroids, mse)
}

/// E[(Y - c)^2] averaged over the given centroids for Y ~ Uniform(1-delta,
/// 1+delta): (1 - c)^2 + delta^2/3 per centroid.
pub fn plug_in_uniform_mse(centroids: &[f64], delta: f64) -> f64 {
    let base = delta * delta / 3.0;
    centroids.iter().map(|c| (1.0 - c).powi(2) + base).sum::<f64>() / centroids.len() as f64
}

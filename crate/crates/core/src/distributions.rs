//! Population sources: synthetic task distributions used by the theory
//! checks, a Gaussian-mixture stand-in for real classification datasets,
//! empirical dataset streams, and the low-rank preference matrix for the
//! collaborative-filtering market.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Datum};
use crate::error::Error;
use crate::rng::SimRng;
use crate::Result;

/// Parameter-only description of a population source; `PopulationSource`
/// binds it to a dataset and stream state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationSpec {
    /// Binary features with a rare positive: x = 1 with probability
    /// 1/rarity, else 0, and y = x deterministically.
    RareBinary { rarity: usize },
    /// Constant input, noisy binary label: y = 1 with probability 1 - eps.
    NoisyConstant { eps: f64 },
    /// Constant input delta/2; the response is 0 or delta equiprobably.
    SymmetricTwoPoint { delta: f64 },
    /// Constant input 1; the response is Uniform(1 - delta, 1 + delta).
    UniformBand { delta: f64 },
    /// Equiprobable classes with means separation * e_c on the coordinate
    /// simplex and shared isotropic noise.
    GaussianMixture { classes: usize, separation: f64, noise: f64 },
    /// Stream over a user-supplied dataset, each row emitted at most once.
    Empirical,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PopulationSpec::RareBinary { rarity } if rarity < 1 => {
                Err(Error::invalid("rare-binary rarity must be >= 1"))
            }
            PopulationSpec::NoisyConstant { eps } if !(eps > 0.0 && eps <= 1.0 / 3.0) => {
                Err(Error::invalid("noisy-constant eps must lie in (0, 1/3]"))
            }
            PopulationSpec::SymmetricTwoPoint { delta } if delta <= 0.0 => {
                Err(Error::invalid("two-point delta must be positive"))
            }
            PopulationSpec::UniformBand { delta } if delta <= 0.0 => {
                Err(Error::invalid("uniform-band delta must be positive"))
            }
            PopulationSpec::GaussianMixture { classes, separation, noise }
                if classes < 1 || separation <= 0.0 || noise <= 0.0 =>
            {
                Err(Error::invalid("gaussian-mixture needs classes >= 1 and positive scales"))
            }
            _ => Ok(()),
        }
    }

    /// Number of classes the source emits (0 for regression sources).
    pub fn num_classes(&self) -> usize {
        match *self {
            PopulationSpec::RareBinary { .. } | PopulationSpec::NoisyConstant { .. } => 2,
            PopulationSpec::SymmetricTwoPoint { .. } | PopulationSpec::UniformBand { .. } => 0,
            PopulationSpec::GaussianMixture { classes, .. } => classes,
            PopulationSpec::Empirical => 0, // determined by the dataset
        }
    }
}

/// A bound source of user data. Synthetic kinds sample i.i.d. forever;
/// the empirical kind walks a shuffled copy of a dataset without
/// replacement and errors when exhausted.
#[derive(Debug, Clone)]
pub enum PopulationSource {
    Synthetic(PopulationSpec),
    Empirical(EmpiricalStream),
}

#[derive(Debug, Clone)]
pub struct EmpiricalStream {
    data: Vec<Datum>,
    next: usize,
}

impl PopulationSource {
    pub fn synthetic(spec: PopulationSpec) -> Result<Self> {
        spec.validate()?;
        if matches!(spec, PopulationSpec::Empirical) {
            return Err(Error::invalid("empirical sources are built with PopulationSource::empirical"));
        }
        Ok(PopulationSource::Synthetic(spec))
    }

    /// Builds a without-replacement stream over a shuffled copy of `data`.
    pub fn empirical(data: Vec<Datum>, rng: &mut SimRng) -> Self {
        let mut data = data;
        data.shuffle(rng);
        PopulationSource::Empirical(EmpiricalStream { data, next: 0 })
    }

    /// Rows left before an empirical stream exhausts; unbounded otherwise.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            PopulationSource::Synthetic(_) => None,
            PopulationSource::Empirical(s) => Some(s.data.len() - s.next),
        }
    }

    /// Draws the next datum. `round` is only used to name the failing round
    /// in the exhaustion error.
    pub fn sample(&mut self, round: usize, rng: &mut SimRng) -> Result<Datum> {
        match self {
            PopulationSource::Empirical(s) => {
                if s.next >= s.data.len() {
                    return Err(Error::DataExhausted { round });
                }
                let d = s.data[s.next].clone();
                s.next += 1;
                Ok(d)
            }
            PopulationSource::Synthetic(spec) => Ok(sample_synthetic(spec, rng)),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            PopulationSource::Synthetic(spec) => spec.num_classes(),
            PopulationSource::Empirical(s) => {
                s.data
                    .iter()
                    .filter_map(|d| d.label.class())
                    .max()
                    .map(|c| c + 1)
                    .unwrap_or(0)
            }
        }
    }
}

fn sample_synthetic(spec: &PopulationSpec, rng: &mut SimRng) -> Datum {
    match *spec {
        PopulationSpec::RareBinary { rarity } => {
            let x = if rng.random::<f64>() < 1.0 / rarity as f64 { 1.0 } else { 0.0 };
            Datum::class(vec![x], x as usize)
        }
        PopulationSpec::NoisyConstant { eps } => {
            let y = if rng.random::<f64>() < 1.0 - eps { 1 } else { 0 };
            Datum::class(vec![0.0], y)
        }
        PopulationSpec::SymmetricTwoPoint { delta } => {
            let y = if rng.random::<f64>() < 0.5 { 0.0 } else { delta };
            Datum::real(vec![delta / 2.0], y)
        }
        PopulationSpec::UniformBand { delta } => {
            let y = 1.0 - delta + 2.0 * delta * rng.random::<f64>();
            Datum::real(vec![1.0], y)
        }
        PopulationSpec::GaussianMixture { classes, separation, noise } => {
            let c = rng.random_range(0..classes);
            let mut x = Vec::with_capacity(classes);
            for i in 0..classes {
                let z: f64 = StandardNormal.sample(rng);
                let mean = if i == c { separation } else { 0.0 };
                x.push(mean + noise * z);
            }
            Datum::class(x, c)
        }
        PopulationSpec::Empirical => unreachable!("empirical spec has no synthetic sampler"),
    }
}

/// Samples `n` i.i.d. test points from a synthetic spec.
pub fn sample_test_set(spec: &PopulationSpec, n: usize, rng: &mut SimRng) -> Result<Dataset> {
    spec.validate()?;
    let data: Vec<Datum> = (0..n).map(|_| sample_synthetic(spec, rng)).collect();
    Dataset::new(data, spec.num_classes())
}

/// Latent preference matrix for the collaborative-filtering market: entry
/// (i, j) is the probability that user j interacts with item i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    pub m: Array2<f64>,
    pub generating_rank: usize,
}

/// Builds an items x users preference matrix as the product of rank-`rank`
/// Gaussian factors, affine-scaled onto [0, 1] (min -> 0, max -> 1). A
/// degenerate constant product is regenerated from the next draws.
pub fn make_preference_matrix(
    items: usize,
    users: usize,
    rank: usize,
    rng: &mut SimRng,
) -> Result<PreferenceMatrix> {
    if items < 1 || users < 1 || rank < 1 {
        return Err(Error::invalid("preference matrix needs items, users, rank >= 1"));
    }
    loop {
        let v = Array2::from_shape_fn((items, rank), |_| StandardNormal.sample(rng));
        let w = Array2::from_shape_fn((users, rank), |_| StandardNormal.sample(rng));
        let raw = v.dot(&w.t());
        let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max - min < 1e-12 {
            log::warn!("degenerate constant preference product; regenerating");
            continue;
        }
        let m = raw.mapv(|x| (x - min) / (max - min));
        return Ok(PreferenceMatrix { m, generating_rank: rank });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::rng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn rare_binary_degenerate_rarity() {
        let mut src = PopulationSource::synthetic(PopulationSpec::RareBinary { rarity: 1 }).unwrap();
        let mut r = rng::from_seed(0);
        for t in 0..50 {
            let d = src.sample(t, &mut r).unwrap();
            assert_eq!(d.features, vec![1.0]);
            assert_eq!(d.label, Label::Class(1));
        }
    }

    #[test]
    fn rare_binary_label_equals_feature() {
        let mut src = PopulationSource::synthetic(PopulationSpec::RareBinary { rarity: 3 }).unwrap();
        let mut r = rng::from_seed(1);
        for t in 0..200 {
            let d = src.sample(t, &mut r).unwrap();
            assert_eq!(d.label, Label::Class(d.features[0] as usize));
        }
    }

    #[test]
    fn noisy_constant_mean_within_3se() {
        let n = 100_000;
        let mut src =
            PopulationSource::synthetic(PopulationSpec::NoisyConstant { eps: 1.0 / 3.0 }).unwrap();
        let mut r = rng::from_seed(2);
        let ys: Vec<f64> = (0..n)
            .map(|t| src.sample(t, &mut r).unwrap().label.class().unwrap() as f64)
            .collect();
        let (mean, var) = moments(&ys);
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * se);
    }

    #[test]
    fn uniform_band_moments_within_3se() {
        let n = 100_000;
        let delta = 0.3;
        let mut src = PopulationSource::synthetic(PopulationSpec::UniformBand { delta }).unwrap();
        let mut r = rng::from_seed(3);
        let ys: Vec<f64> = (0..n)
            .map(|t| src.sample(t, &mut r).unwrap().label.real().unwrap())
            .collect();
        let (mean, var) = moments(&ys);
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se);
        // Var of the variance estimator for uniform: (mu4 - var^2)/n with
        // mu4 = delta^4/5.
        let var_se = ((delta.powi(4) / 5.0 - (delta * delta / 3.0).powi(2)) / n as f64).sqrt();
        assert!((var - delta * delta / 3.0).abs() < 3.0 * var_se);
    }

    #[test]
    fn two_point_constant_input() {
        let mut src =
            PopulationSource::synthetic(PopulationSpec::SymmetricTwoPoint { delta: 2.0 }).unwrap();
        let mut r = rng::from_seed(4);
        for t in 0..100 {
            let d = src.sample(t, &mut r).unwrap();
            assert_eq!(d.features, vec![1.0]);
            let y = d.label.real().unwrap();
            assert!(y == 0.0 || y == 2.0);
        }
    }

    #[test]
    fn empirical_stream_each_row_once_then_exhausts() {
        let data: Vec<Datum> = (0..10).map(|i| Datum::class(vec![i as f64], 0)).collect();
        let mut r = rng::from_seed(5);
        let mut src = PopulationSource::empirical(data, &mut r);
        let mut seen = Vec::new();
        for t in 0..10 {
            seen.push(src.sample(t, &mut r).unwrap().features[0]);
        }
        seen.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(seen, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        match src.sample(10, &mut r) {
            Err(Error::DataExhausted { round: 10 }) => {}
            other => panic!("expected exhaustion at round 10, got {other:?}"),
        }
    }

    #[test]
    fn preference_matrix_shape_range_and_rank() {
        let mut r = rng::from_seed(6);
        let pm = make_preference_matrix(12, 64, 3, &mut r).unwrap();
        assert_eq!(pm.m.shape(), &[12, 64]);
        let min = pm.m.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = pm.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
        // Numerical rank <= rank + 1: singular values past index rank+1
        // are below 1e-8 * sigma_max. Power iteration on a 12x12 Gram
        // matrix is overkill; check rank by Gaussian elimination instead.
        assert!(numerical_rank(&pm.m) <= 4);
    }

    fn numerical_rank(m: &Array2<f64>) -> usize {
        let mut a: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        let rows = a.len();
        let cols = a[0].len();
        let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let tol = 1e-8 * scale;
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows {
                break;
            }
            let pivot = (rank..rows).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()));
            let Some(p) = pivot else { break };
            if a[p][col].abs() < tol {
                continue;
            }
            a.swap(rank, p);
            for i in (rank + 1)..rows {
                let f = a[i][col] / a[rank][col];
                for c in col..cols {
                    a[i][c] -= f * a[rank][c];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn preference_matrix_deterministic_under_seed() {
        let a = make_preference_matrix(5, 7, 2, &mut rng::from_seed(8)).unwrap();
        let b = make_preference_matrix(5, 7, 2, &mut rng::from_seed(8)).unwrap();
        assert_eq!(a.m, b.m);
    }

    #[test]
    fn spec_validation() {
        assert!(PopulationSpec::NoisyConstant { eps: 0.5 }.validate().is_err());
        assert!(PopulationSpec::RareBinary { rarity: 0 }.validate().is_err());
        assert!(PopulationSpec::UniformBand { delta: 0.0 }.validate().is_err());
    }
}

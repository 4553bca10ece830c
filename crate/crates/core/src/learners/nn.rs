//! One-nearest-neighbor. The dataset is the model: observing a datum is an
//! implicit retrain. Equidistant nearest points are resolved by majority
//! vote over their labels; a vote tie goes to the smallest class id.

use crate::data::{Datum, Label};
use crate::error::Error;
use crate::learners::check_dim;
use crate::Result;

const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct NearestNeighbor {
    data: Vec<Datum>,
}

impl NearestNeighbor {
    pub fn new() -> Self {
        NearestNeighbor { data: Vec::new() }
    }

    pub fn fit_seed(&mut self, seed: &[Datum]) -> Result<()> {
        if seed.is_empty() {
            return Err(Error::invalid("1-NN requires a nonempty seed set"));
        }
        let dim = seed[0].features.len();
        for d in seed {
            check_dim(dim, d.features.len())?;
        }
        self.data = seed.to_vec();
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        if self.data.is_empty() {
            return Err(Error::Unfitted("1-NN has no data".into()));
        }
        check_dim(self.data[0].features.len(), x.len())?;
        let mut best = f64::INFINITY;
        let mut dists = Vec::with_capacity(self.data.len());
        for d in &self.data {
            let dist: f64 = d
                .features
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(dist);
            if dist < best {
                best = dist;
            }
        }
        let tol = TIE_REL_TOL * best.max(1.0);
        let tied: Vec<&Label> = self
            .data
            .iter()
            .zip(&dists)
            .filter(|(_, &d)| d <= best + tol)
            .map(|(d, _)| &d.label)
            .collect();
        Ok(vote(&tied))
    }

    pub fn observe(&mut self, datum: Datum) -> Result<()> {
        if let Some(first) = self.data.first() {
            check_dim(first.features.len(), datum.features.len())?;
        }
        self.data.push(datum);
        Ok(())
    }

    pub fn dataset_len(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[Datum] {
        &self.data
    }
}

fn vote(labels: &[&Label]) -> Label {
    match labels[0] {
        Label::Class(_) => {
            let mut counts: Vec<(usize, usize)> = Vec::new();
            for l in labels {
                if let Label::Class(c) = l {
                    match counts.iter_mut().find(|(cls, _)| cls == c) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((*c, 1)),
                    }
                }
            }
            // Most votes; smallest class id on a vote tie.
            counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            Label::Class(counts[0].0)
        }
        Label::Real(_) => {
            let vals: Vec<f64> = labels.iter().filter_map(|l| l.real()).collect();
            Label::Real(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

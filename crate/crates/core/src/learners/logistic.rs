//! Multinomial logistic regression trained by full-batch gradient descent.
//! Weights start at zero and are fine-tuned (never reset) on each retrain.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Datum, Label};
use crate::error::Error;
use crate::learners::check_dim;
use crate::rng::SimRng;
use crate::Result;

fn default_lr() -> f64 {
    0.1
}
fn default_cadence() -> usize {
    1
}
fn default_epochs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Retrain after every `retrain_cadence`-th observation.
    #[serde(default = "default_cadence")]
    pub retrain_cadence: usize,
    /// Full-batch gradient steps per retrain.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl LogisticParams {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        LogisticParams {
            input_dim,
            classes,
            learning_rate: default_lr(),
            retrain_cadence: default_cadence(),
            epochs: default_epochs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 {
            return Err(Error::invalid("logistic needs input_dim >= 1 and classes >= 2"));
        }
        if self.retrain_cadence == 0 || self.epochs == 0 {
            return Err(Error::invalid("logistic cadence and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("logistic learning rate must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Logistic {
    params: LogisticParams,
    /// classes x (input_dim + 1); last column is the bias.
    w: Array2<f64>,
    data: Vec<Datum>,
    since_retrain: usize,
    retrains: usize,
    rng: SimRng,
}

impl Logistic {
    pub fn new(params: LogisticParams, rng: SimRng) -> Self {
        let w = Array2::zeros((params.classes, params.input_dim + 1));
        Logistic { params, w, data: Vec::new(), since_retrain: 0, retrains: 0, rng }
    }

    pub fn fit_seed(&mut self, seed: &[Datum]) -> Result<()> {
        for d in seed {
            self.check_datum(d)?;
        }
        self.data = seed.to_vec();
        self.since_retrain = 0;
        if !self.data.is_empty() {
            self.train();
        }
        Ok(())
    }

    fn check_datum(&self, d: &Datum) -> Result<()> {
        check_dim(self.params.input_dim, d.features.len())?;
        match d.label {
            Label::Class(c) if c < self.params.classes => Ok(()),
            Label::Class(c) => Err(Error::invalid(format!(
                "class {c} out of range for {} classes",
                self.params.classes
            ))),
            Label::Real(_) => Err(Error::invalid("logistic needs class labels")),
        }
    }

    fn logits(&self, x: &[f64]) -> Array1<f64> {
        let mut z = Array1::zeros(self.params.classes);
        for c in 0..self.params.classes {
            let row = self.w.row(c);
            let mut v = row[self.params.input_dim];
            for (j, xi) in x.iter().enumerate() {
                v += row[j] * xi;
            }
            z[c] = v;
        }
        z
    }

    fn softmax(z: &Array1<f64>) -> Array1<f64> {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = z.mapv(|v| (v - m).exp());
        let s = p.sum();
        p /= s;
        p
    }

    /// One full-batch gradient step; returns the pre-step mean NLL.
    fn step(&mut self) -> f64 {
        let n = self.data.len() as f64;
        let mut grad = Array2::<f64>::zeros(self.w.dim());
        let mut nll = 0.0;
        for d in &self.data {
            let p = Self::softmax(&self.logits(&d.features));
            let y = d.label.class().unwrap();
            nll -= p[y].max(1e-300).ln();
            for c in 0..self.params.classes {
                let err = p[c] - if c == y { 1.0 } else { 0.0 };
                for (j, xi) in d.features.iter().enumerate() {
                    grad[(c, j)] += err * xi;
                }
                grad[(c, self.params.input_dim)] += err;
            }
        }
        grad /= n;
        self.w.scaled_add(-self.params.learning_rate, &grad);
        nll / n
    }

    fn train(&mut self) {
        for _ in 0..self.params.epochs {
            self.step();
        }
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<Label> {
        check_dim(self.params.input_dim, x.len())?;
        if self.data.is_empty() {
            // No data yet: fall back to a uniform-random class.
            return Ok(Label::Class(self.rng.random_range(0..self.params.classes)));
        }
        let z = self.logits(x);
        let mut best = 0;
        for c in 1..self.params.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        Ok(Label::Class(best))
    }

    pub fn observe(&mut self, datum: Datum) -> Result<()> {
        self.check_datum(&datum)?;
        self.data.push(datum);
        self.since_retrain += 1;
        if self.since_retrain == self.params.retrain_cadence {
            self.train();
            self.since_retrain = 0;
            self.retrains += 1;
        }
        Ok(())
    }

    pub fn dataset_len(&self) -> usize {
        self.data.len()
    }

    pub fn retrain_count(&self) -> usize {
        self.retrains
    }

    /// Mean negative log-likelihood over the owned dataset.
    pub fn mean_nll(&self) -> f64 {
        let n = self.data.len() as f64;
        let mut nll = 0.0;
        for d in &self.data {
            let p = Self::softmax(&self.logits(&d.features));
            nll -= p[d.label.class().unwrap()].max(1e-300).ln();
        }
        nll / n
    }

    pub fn train_accuracy(&self) -> f64 {
        let mut hits = 0usize;
        for d in &self.data {
            let z = self.logits(&d.features);
            let mut best = 0;
            for c in 1..self.params.classes {
                if z[c] > z[best] {
                    best = c;
                }
            }
            if best == d.label.class().unwrap() {
                hits += 1;
            }
        }
        hits as f64 / self.data.len() as f64
    }
}

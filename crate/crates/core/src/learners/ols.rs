//! Scalar ordinary least squares through the origin. The weight estimate
//! is sum(x*y) / sum(x^2), maintained incrementally; with a constant input
//! it reduces to the running mean of the responses.

use crate::data::{Datum, Label};
use crate::learners::check_dim;
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct Ols {
    sxy: f64,
    sxx: f64,
    n: usize,
}

impl Ols {
    pub fn new() -> Self {
        Ols::default()
    }

    pub fn fit_seed(&mut self, seed: &[Datum]) -> Result<()> {
        self.sxy = 0.0;
        self.sxx = 0.0;
        self.n = 0;
        for d in seed {
            self.accumulate(d)?;
        }
        Ok(())
    }

    fn accumulate(&mut self, d: &Datum) -> Result<()> {
        check_dim(1, d.features.len())?;
        let x = d.features[0];
        let y = d
            .label
            .real()
            .ok_or_else(|| crate::Error::invalid("least squares needs a real-valued label"))?;
        self.sxy += x * y;
        self.sxx += x * x;
        self.n += 1;
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        if self.sxx == 0.0 {
            0.0
        } else {
            self.sxy / self.sxx
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        check_dim(1, x.len())?;
        Ok(Label::Real(self.weight() * x[0]))
    }

    pub fn observe(&mut self, datum: Datum) -> Result<()> {
        self.accumulate(&datum)
    }

    pub fn dataset_len(&self) -> usize {
        self.n
    }
}

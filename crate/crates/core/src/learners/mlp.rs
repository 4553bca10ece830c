//! One-hidden-layer network: rectified-linear hidden activation, softmax
//! cross-entropy output, Adam updates. Weights are drawn once at
//! construction from a uniform fan-in scheme and fine-tuned forever after;
//! retrains never reinitialize. Parameters live in one flat vector so the
//! optimizer and the finite-difference tests share a single layout:
//! [w1 (hidden x in, row-major), b1, w2 (classes x hidden), b2].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Datum, Label};
use crate::error::Error;
use crate::learners::check_dim;
use crate::rng::SimRng;
use crate::Result;

fn default_lr() -> f64 {
    1e-3
}
fn default_cadence() -> usize {
    4
}
fn default_batch() -> usize {
    32
}
fn default_point_cap() -> usize {
    1000
}
fn default_epoch_cap() -> usize {
    32
}
fn default_sample_cap() -> usize {
    1000
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub classes: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Retrain after every `retrain_cadence`-th observation.
    #[serde(default = "default_cadence")]
    pub retrain_cadence: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// A retrain stops once this many point-updates have been applied.
    #[serde(default = "default_point_cap")]
    pub point_cap: usize,
    /// ... or once this many passes over the sampled set have run.
    #[serde(default = "default_epoch_cap")]
    pub epoch_cap: usize,
    /// Each retrain trains on min(|D|, sample_cap) points drawn without
    /// replacement from the owned dataset.
    #[serde(default = "default_sample_cap")]
    pub sample_cap: usize,
}

impl MlpParams {
    pub fn new(input_dim: usize, hidden_width: usize, classes: usize) -> Self {
        MlpParams {
            input_dim,
            hidden_width,
            classes,
            learning_rate: default_lr(),
            retrain_cadence: default_cadence(),
            batch_size: default_batch(),
            point_cap: default_point_cap(),
            epoch_cap: default_epoch_cap(),
            sample_cap: default_sample_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.classes < 2 {
            return Err(Error::invalid("mlp needs positive widths and classes >= 2"));
        }
        if self.retrain_cadence == 0
            || self.batch_size == 0
            || self.point_cap == 0
            || self.epoch_cap == 0
            || self.sample_cap == 0
        {
            return Err(Error::invalid("mlp cadences and caps must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("mlp learning rate must be positive and finite"));
        }
        Ok(())
    }

    fn n_params(&self) -> usize {
        self.hidden_width * self.input_dim
            + self.hidden_width
            + self.classes * self.hidden_width
            + self.classes
    }

    /// Segment offsets into the flat parameter vector: [w1, b1, w2, b2, end].
    fn offsets(&self) -> [usize; 5] {
        let o1 = self.hidden_width * self.input_dim;
        let o2 = o1 + self.hidden_width;
        let o3 = o2 + self.classes * self.hidden_width;
        [0, o1, o2, o3, o3 + self.classes]
    }
}

/// Mean cross-entropy gradient over a batch, split per parameter group.
#[derive(Debug, Clone)]
pub struct MlpGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGradient {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.clone();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    params: MlpParams,
    theta: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
    data: Vec<Datum>,
    since_retrain: usize,
    retrains: usize,
    rng: SimRng,
}

impl Mlp {
    pub fn new(params: MlpParams, mut rng: SimRng) -> Self {
        let n = params.n_params();
        let [_, o1, o2, o3, o4] = params.offsets();
        let mut theta = vec![0.0; n];
        // Uniform fan-in initialization; each layer's bias uses that
        // layer's fan-in. Drawn exactly once, here.
        let bound1 = 1.0 / (params.input_dim as f64).sqrt();
        let bound2 = 1.0 / (params.hidden_width as f64).sqrt();
        for t in theta[..o2].iter_mut() {
            *t = rng.random_range(-bound1..bound1);
        }
        for t in theta[o2..o4].iter_mut() {
            *t = rng.random_range(-bound2..bound2);
        }
        let _ = (o1, o3);
        Mlp {
            params,
            theta,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_t: 0,
            data: Vec::new(),
            since_retrain: 0,
            retrains: 0,
            rng,
        }
    }

    pub fn fit_seed(&mut self, seed: &[Datum]) -> Result<()> {
        for d in seed {
            self.check_datum(d)?;
        }
        self.data = seed.to_vec();
        self.since_retrain = 0;
        if !self.data.is_empty() {
            self.retrain();
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
            Label::Real(_) => Err(Error::invalid("mlp needs class labels")),
        }
    }

    /// Forward pass: (hidden pre-activations, class probabilities).
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let [_, o1, o2, o3, _] = p.offsets();
        let mut pre = vec![0.0; p.hidden_width];
        for j in 0..p.hidden_width {
            let mut v = self.theta[o1 + j];
            let row = &self.theta[j * p.input_dim..(j + 1) * p.input_dim];
            for (w, xi) in row.iter().zip(x) {
                v += w * xi;
            }
            pre[j] = v;
        }
        let mut z = vec![0.0; p.classes];
        for c in 0..p.classes {
            let mut v = self.theta[o3 + c];
            let row = &self.theta[o2 + c * p.hidden_width..o2 + (c + 1) * p.hidden_width];
            for (w, &h) in row.iter().zip(&pre) {
                v += w * h.max(0.0);
            }
            z[c] = v;
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in z.iter_mut() {
            *v /= sum;
        }
        (pre, z)
    }

    /// Mean cross-entropy loss over a batch.
    pub fn mean_loss(&self, batch: &[Datum]) -> f64 {
        let mut loss = 0.0;
        for d in batch {
            let (_, probs) = self.forward(&d.features);
            loss -= probs[d.label.class().unwrap()].max(1e-300).ln();
        }
        loss / batch.len() as f64
    }

    /// Gradient of the mean cross-entropy over the batch, in flat layout.
    pub fn gradient_flat(&self, batch: &[Datum]) -> Vec<f64> {
        let p = &self.params;
        let [_, o1, o2, o3, _] = p.offsets();
        let mut g = vec![0.0; p.n_params()];
        let scale = 1.0 / batch.len() as f64;
        for d in batch {
            let (pre, probs) = self.forward(&d.features);
            let y = d.label.class().unwrap();
            let mut dh = vec![0.0; p.hidden_width];
            for c in 0..p.classes {
                let dz = (probs[c] - if c == y { 1.0 } else { 0.0 }) * scale;
                g[o3 + c] += dz;
                for j in 0..p.hidden_width {
                    g[o2 + c * p.hidden_width + j] += dz * pre[j].max(0.0);
                    dh[j] += dz * self.theta[o2 + c * p.hidden_width + j];
                }
            }
            for j in 0..p.hidden_width {
                if pre[j] > 0.0 {
                    g[o1 + j] += dh[j];
                    for (i, xi) in d.features.iter().enumerate() {
                        g[j * p.input_dim + i] += dh[j] * xi;
                    }
                }
            }
        }
        g
    }

    pub fn gradient(&self, batch: &[Datum]) -> MlpGradient {
        let g = self.gradient_flat(batch);
        let [_, o1, o2, o3, o4] = self.params.offsets();
        MlpGradient {
            w1: g[..o1].to_vec(),
            b1: g[o1..o2].to_vec(),
            w2: g[o2..o3].to_vec(),
            b2: g[o3..o4].to_vec(),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn set_params_flat(&mut self, theta: &[f64]) -> Result<()> {
        check_dim(self.theta.len(), theta.len())?;
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn adam_step(&mut self, grad: &[f64]) {
        self.adam_t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.adam_t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.adam_t as i32);
        let lr = self.params.learning_rate;
        for i in 0..self.theta.len() {
            self.adam_m[i] = ADAM_BETA1 * self.adam_m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.adam_v[i] = ADAM_BETA2 * self.adam_v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.adam_m[i] / bc1;
            let v_hat = self.adam_v[i] / bc2;
            self.theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    /// Fine-tunes from the current weights on a without-replacement sample
    /// of the owned dataset, stopping at the point or epoch cap.
    fn retrain(&mut self) {
        let take = self.data.len().min(self.params.sample_cap);
        let mut idx: Vec<usize> = (0..self.data.len()).collect();
        idx.shuffle(&mut self.rng);
        idx.truncate(take);
        let mut points = 0usize;
        'epochs: for _ in 0..self.params.epoch_cap {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(self.params.batch_size) {
                let batch: Vec<Datum> = chunk.iter().map(|&i| self.data[i].clone()).collect();
                let g = self.gradient_flat(&batch);
                self.adam_step(&g);
                points += batch.len();
                if points >= self.params.point_cap {
                    break 'epochs;
                }
            }
        }
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<Label> {
        check_dim(self.params.input_dim, x.len())?;
        if self.data.is_empty() {
            return Ok(Label::Class(self.rng.random_range(0..self.params.classes)));
        }
        let (_, probs) = self.forward(x);
        let mut best = 0;
        for c in 1..self.params.classes {
            if probs[c] > probs[best] {
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
            self.retrain();
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn zero_weights_balanced_batch_has_zero_output_bias_gradient() {
        let params = MlpParams::new(2, 3, 2);
        let n = params.n_params();
        let mut mlp = Mlp::new(params, rng::from_seed(1));
        mlp.set_params_flat(&vec![0.0; n]).unwrap();
        let batch = vec![
            Datum::class(vec![0.3, -1.0], 0),
            Datum::class(vec![2.0, 0.7], 1),
        ];
        let g = mlp.gradient(&batch);
        for v in &g.b2 {
            assert!(v.abs() < 1e-15, "bias gradient {v}");
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut meta = rng::from_seed(7);
        for cfg in 0..10 {
            let input_dim = meta.random_range(1..=4);
            let hidden = meta.random_range(1..=5);
            let classes = meta.random_range(2..=4);
            let params = MlpParams::new(input_dim, hidden, classes);
            let mut mlp = Mlp::new(params, rng::from_seed(100 + cfg));
            let batch: Vec<Datum> = (0..3)
                .map(|_| {
                    let x: Vec<f64> = (0..input_dim).map(|_| meta.random_range(-2.0..2.0)).collect();
                    Datum::class(x, meta.random_range(0..classes))
                })
                .collect();
            let g = mlp.gradient_flat(&batch);
            let theta = mlp.params_flat();
            let h = 1e-4;
            for i in 0..theta.len() {
                let mut tp = theta.clone();
                tp[i] += h;
                mlp.set_params_flat(&tp).unwrap();
                let lp = mlp.mean_loss(&batch);
                tp[i] = theta[i] - h;
                mlp.set_params_flat(&tp).unwrap();
                let lm = mlp.mean_loss(&batch);
                mlp.set_params_flat(&theta).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
                assert!(err < 1e-5, "config {cfg} param {i}: analytic {} vs fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn duplicating_the_batch_leaves_the_mean_gradient_unchanged() {
        let mlp = Mlp::new(MlpParams::new(2, 4, 3), rng::from_seed(9));
        let batch = vec![
            Datum::class(vec![0.5, -0.2], 0),
            Datum::class(vec![-1.0, 1.3], 2),
            Datum::class(vec![0.1, 0.1], 1),
        ];
        let mut doubled = batch.clone();
        doubled.extend(batch.clone());
        let g1 = mlp.gradient_flat(&batch);
        let g2 = mlp.gradient_flat(&doubled);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cadence_four_retrains_on_fourth_and_eighth() {
        let mut mlp = Mlp::new(MlpParams::new(1, 2, 2), rng::from_seed(3));
        mlp.fit_seed(&[Datum::class(vec![0.0], 0)]).unwrap();
        for i in 1..=9 {
            mlp.observe(Datum::class(vec![i as f64], i % 2)).unwrap();
            assert_eq!(mlp.retrain_count(), i / 4, "after observation {i}");
        }
    }

    #[test]
    fn initialization_is_fan_in_bounded_and_drawn_once() {
        let params = MlpParams::new(4, 3, 2);
        let [_, _, o2, _, o4] = params.offsets();
        let mlp = Mlp::new(params.clone(), rng::from_seed(5));
        let theta = mlp.params_flat();
        let b1 = 1.0 / (params.input_dim as f64).sqrt();
        let b2 = 1.0 / (params.hidden_width as f64).sqrt();
        for &w in &theta[..o2] {
            assert!(w.abs() <= b1);
        }
        for &w in &theta[o2..o4] {
            assert!(w.abs() <= b2);
        }
        // Same rng stream, same initialization; an empty seed fit must not
        // redraw the weights.
        let mut again = Mlp::new(params, rng::from_seed(5));
        again.fit_seed(&[]).unwrap();
        assert_eq!(again.params_flat(), theta);
    }
}

//! Feedforward classifier used as the representation learner.
//!
//! `input -> [dense + ReLU]* -> dense -> softmax`, trained with minibatch
//! Adam on cross-entropy. The activations of the last hidden layer are the
//! embedding that class discovery clusters.

mod checkpoint;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use self::checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_classes: usize,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_classes: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_dims,
            output_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "network needs input_dim >= 1 and at least one hidden layer, all widths >= 1 (got {} / {:?})",
                self.input_dim, self.hidden_dims
            )));
        }
        if self.output_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "network needs at least 2 output classes, got {}",
                self.output_classes
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.output_classes);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "adam needs learning_rate > 0, 0 <= beta1, beta2 < 1, epsilon > 0, batch_size >= 1 (got {self:?})"
            )))
        }
    }
}

/// One affine layer. `weights` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn he(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let scale = (2.0 / fan_in as f64).sqrt();
        Dense {
            weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                scale * rng.sample::<f64, _>(StandardNormal)
            }),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Dense {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn n_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Per-layer parameter gradients, same shapes as the layers.
pub type Gradients = Vec<Dense>;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: NetworkConfig,
    layers: Vec<Dense>,
    first_moment: Vec<Dense>,
    second_moment: Vec<Dense>,
    step: u64,
    epochs: u64,
}

/// He-initialized model (`N(0, 2/fan_in)` weights, zero biases).
pub fn init_model(cfg: &NetworkConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let widths = cfg.widths();
    let layers: Vec<Dense> = widths
        .windows(2)
        .map(|w| Dense::he(w[0], w[1], &mut rng))
        .collect();
    Ok(Model::from_layers(cfg.clone(), layers))
}

impl Model {
    fn from_layers(config: NetworkConfig, layers: Vec<Dense>) -> Self {
        let zeros: Vec<Dense> = layers.iter().map(Dense::zeros_like).collect();
        Model {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            layers,
            step: 0,
            epochs: 0,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Direct parameter access, for gradient checks and surgery.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Number of Adam updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Number of completed training epochs; also the shuffle stream index of
    /// the next epoch.
    pub fn epochs_completed(&self) -> u64 {
        self.epochs
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(Dense::n_parameters).sum()
    }

    pub fn embedding_dim(&self) -> usize {
        *self.config.hidden_dims.last().expect("validated: at least one hidden layer")
    }

    fn check_width(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Hidden activations for every layer; the last entry is the embedding.
    fn hidden(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let n_hidden = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_hidden);
        for layer in &self.layers[..n_hidden] {
            let input = acts.last().map_or(x.view(), |a| a.view());
            let mut z = input.dot(&layer.weights);
            z += &layer.bias;
            z.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
            acts.push(z);
        }
        acts
    }

    fn logits_from(&self, embedding: &Array2<f64>) -> Array2<f64> {
        let out = self.layers.last().expect("model has an output layer");
        let mut z = embedding.dot(&out.weights);
        z += &out.bias;
        z
    }

    /// Last hidden (post-ReLU) activations.
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(&x)?;
        Ok(self.hidden(x).pop().expect("at least one hidden layer"))
    }

    /// Softmax class probabilities, one row per sample.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(&x)?;
        let emb = self.hidden(x).pop().expect("at least one hidden layer");
        let mut z = self.logits_from(&emb);
        softmax_rows(&mut z);
        Ok(z)
    }

    /// Mean cross-entropy of a batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<f64> {
        let p = self.predict_proba(x)?;
        self.check_labels(x.nrows(), y)?;
        Ok(cross_entropy(&p, y))
    }

    fn check_labels(&self, n: usize, y: &[usize]) -> Result<()> {
        if y.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: y.len() });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= self.config.output_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.config.output_classes,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy of the batch and its gradient with respect to every
    /// parameter (backpropagation).
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<(f64, Gradients)> {
        self.check_width(&x)?;
        self.check_labels(x.nrows(), y)?;
        let n = x.nrows() as f64;
        let acts = self.hidden(x);
        let mut probs = self.logits_from(acts.last().expect("hidden layer"));
        softmax_rows(&mut probs);
        let loss = cross_entropy(&probs, y);

        // d loss / d logits = (p - onehot) / n
        let mut delta = probs;
        for (mut row, &label) in delta.rows_mut().into_iter().zip(y) {
            row[label] -= 1.0;
        }
        delta.mapv_inplace(|v| v / n);

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.view() } else { acts[l - 1].view() };
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(&acts[l - 1], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }

    fn apply_adam(&mut self, grads: &Gradients, adam: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - adam.beta1.powi(t);
        let c2 = 1.0 - adam.beta2.powi(t);
        let (b1, b2, lr, eps) = (adam.beta1, adam.beta2, adam.learning_rate, adam.epsilon);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, m), v), g) in self
            .layers
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
            .zip(grads)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }

    /// One Adam update on a single batch; returns the batch loss before the
    /// update.
    pub fn train_batch(&mut self, x: ArrayView2<f64>, y: &[usize], adam: &AdamConfig) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(x, y)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epochs,
                batch: 0,
            });
        }
        self.apply_adam(&grads, adam);
        Ok(loss)
    }

    /// Minibatch Adam training. Each epoch visits the samples in an order
    /// drawn from `adam.seed` and the model's epoch counter. Returns the mean
    /// batch loss of every epoch.
    pub fn train_epochs(
        &mut self,
        x: ArrayView2<f64>,
        y: &[usize],
        adam: &AdamConfig,
        epochs: usize,
    ) -> Result<Vec<f64>> {
        adam.validate()?;
        self.check_width(&x)?;
        self.check_labels(x.nrows(), y)?;
        if x.nrows() == 0 {
            return Err(Error::Empty("training set"));
        }
        let mut losses = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for _ in 0..epochs {
            let mut rng = seed::rng(seed::derive_seed(adam.seed, self.epochs));
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for (batch, idx) in order.chunks(adam.batch_size).enumerate() {
                let xb = x.select(Axis(0), idx);
                let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
                let (loss, grads) = self.loss_and_gradients(xb.view(), &yb)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: self.epochs,
                        batch,
                    });
                }
                self.apply_adam(&grads, adam);
                total += loss;
                batches += 1;
            }
            self.epochs += 1;
            losses.push(total / batches as f64);
        }
        Ok(losses)
    }

    /// Widens the output layer to `new_output_classes`. Hidden layers and the
    /// existing output columns (and their optimizer state) are kept; the new
    /// columns get fresh He-initialized weights and zero bias.
    pub fn expand_outputs(&mut self, new_output_classes: usize, seed: u64) -> Result<()> {
        let current = self.config.output_classes;
        if new_output_classes <= current {
            return Err(Error::Shrink {
                current,
                requested: new_output_classes,
            });
        }
        let mut rng = seed::rng(seed);
        let fan_in = self.embedding_dim();
        let extra = new_output_classes - current;
        let fresh = Dense::he(fan_in, extra, &mut rng);

        let widen = |d: &mut Dense, new: Option<&Dense>| {
            let mut w = Array2::zeros((fan_in, new_output_classes));
            w.slice_mut(s![.., ..current]).assign(&d.weights);
            let mut b = Array1::zeros(new_output_classes);
            b.slice_mut(s![..current]).assign(&d.bias);
            if let Some(new) = new {
                w.slice_mut(s![.., current..]).assign(&new.weights);
            }
            d.weights = w;
            d.bias = b;
        };
        widen(self.layers.last_mut().expect("output layer"), Some(&fresh));
        widen(self.first_moment.last_mut().expect("output layer"), None);
        widen(self.second_moment.last_mut().expect("output layer"), None);
        self.config.output_classes = new_output_classes;
        Ok(())
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn cross_entropy(probs: &Array2<f64>, y: &[usize]) -> f64 {
    let total: f64 = probs
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &label)| {
            let p = row[label];
            // `max` would swallow NaN
            if p.is_nan() { p } else { -p.max(f64::MIN_POSITIVE).ln() }
        })
        .sum();
    total / y.len().max(1) as f64
}

/// Index of the largest entry of each row (first one on ties).
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

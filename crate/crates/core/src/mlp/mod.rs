//! Three-layer perceptron: normalized input → sigmoid hidden layer → softmax.
//!
//! Arithmetic runs in double precision. Trained and freshly initialized
//! weights are always representable in single precision so that the model
//! container, which stores `f32` blobs, round-trips them exactly.

mod container;

pub use container::{MlpModel, ModelManifest, MAGIC};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gabor::FeatureMatrix;

const STD_FLOOR: f64 = 1e-6;

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn apply_row(&self, row: ArrayView1<f32>, out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.inv_std) {
            *o = (*x as f64 - m) * s;
        }
    }
}

/// Population mean and 1/max(std, 1e-6) over every frame of every matrix.
pub fn fit_normalizer<'a, I>(features: I) -> Result<FeatureNormalizer>
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
    I::IntoIter: Clone,
{
    let features = features.into_iter();
    let total: usize = features.clone().map(FeatureMatrix::n_frames).sum();
    if total < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalizer needs at least 2 frames, got {total}"
        )));
    }
    let dim = features.clone().next().expect("frames exist").dim();
    let mut sum = vec![0.0f64; dim];
    for fm in features.clone() {
        if fm.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: dim,
                actual: fm.dim(),
            });
        }
        for row in fm.values.outer_iter() {
            for (s, x) in sum.iter_mut().zip(row) {
                *s += *x as f64;
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / total as f64).collect();
    let mut sq = vec![0.0f64; dim];
    for fm in features {
        for row in fm.values.outer_iter() {
            for ((q, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                let d = *x as f64 - m;
                *q += d * d;
            }
        }
    }
    let inv_std = sq
        .iter()
        .map(|q| 1.0 / (q / total as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(FeatureNormalizer { mean, inv_std })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax in place.
pub fn softmax_inplace(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Weights, biases and input normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// hidden × input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// classes × hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub normalizer: FeatureNormalizer,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

fn snap(x: f64) -> f64 {
    x as f32 as f64
}

impl Network {
    /// Glorot-uniform weights drawn at single precision, zero biases.
    pub fn init(
        input: usize,
        hidden: usize,
        classes: usize,
        normalizer: FeatureNormalizer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidParameter("network dimensions must be positive".into()));
        }
        if normalizer.dim() != input {
            return Err(Error::DimensionMismatch {
                what: "normalizer dimension",
                expected: input,
                actual: normalizer.dim(),
            });
        }
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit) as f64)
        };
        let w1 = glorot(hidden, input);
        let w2 = glorot(classes, hidden);
        Ok(Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
            normalizer,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.w2.nrows()
    }

    /// Rounds every parameter to the nearest single-precision value.
    pub fn snap_to_f32(&mut self) {
        self.w1.mapv_inplace(snap);
        self.b1.mapv_inplace(snap);
        self.w2.mapv_inplace(snap);
        self.b2.mapv_inplace(snap);
    }

    fn check_dim(&self, actual: usize) -> Result<()> {
        if actual != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature row",
                expected: self.input_dim(),
                actual,
            });
        }
        Ok(())
    }

    /// Posterior over classes for one raw (unnormalized) feature row.
    pub fn forward(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(row.len())?;
        let x: Array1<f64> = row
            .iter()
            .zip(&self.normalizer.mean)
            .zip(&self.normalizer.inv_std)
            .map(|((x, m), s)| (x - m) * s)
            .collect();
        let hidden = (self.w1.dot(&x) + &self.b1).mapv(sigmoid);
        let mut logits = (self.w2.dot(&hidden) + &self.b2).to_vec();
        softmax_inplace(&mut logits);
        Ok(logits)
    }

    /// T × C posteriors for every frame of a feature matrix.
    pub fn posteriors(&self, features: &FeatureMatrix) -> Result<Array2<f64>> {
        self.check_dim(features.dim())?;
        let x = self.normalize(features.values.view());
        Ok(self.forward_normalized(x.view()).1)
    }

    fn normalize(&self, raw: ArrayView2<f32>) -> Array2<f64> {
        let mut x = Array2::zeros(raw.dim());
        for (src, mut dst) in raw.outer_iter().zip(x.outer_iter_mut()) {
            self.normalizer
                .apply_row(src, dst.as_slice_mut().expect("row-major"));
        }
        x
    }

    /// (hidden activations, posteriors) for a batch of normalized rows.
    fn forward_normalized(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut hidden = x.dot(&self.w1.t());
        hidden += &self.b1;
        hidden.mapv_inplace(sigmoid);
        let mut out = hidden.dot(&self.w2.t());
        out += &self.b2;
        for mut row in out.outer_iter_mut() {
            softmax_inplace(row.as_slice_mut().expect("row-major"));
        }
        (hidden, out)
    }

    fn check_targets(&self, rows: usize, targets: &[usize]) -> Result<()> {
        if rows != targets.len() {
            return Err(Error::DimensionMismatch {
                what: "batch targets",
                expected: rows,
                actual: targets.len(),
            });
        }
        if rows == 0 {
            return Err(Error::Empty("batch"));
        }
        if let Some(&id) = targets.iter().find(|&&t| t >= self.n_classes()) {
            return Err(Error::ClassOutOfRange {
                id,
                classes: self.n_classes(),
            });
        }
        Ok(())
    }

    /// Mean cross-entropy of a batch of raw feature rows.
    pub fn loss(&self, batch: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
        self.check_dim(batch.ncols())?;
        self.check_targets(batch.nrows(), targets)?;
        let x = self.normalize_f64(batch);
        let (_, post) = self.forward_normalized(x.view());
        Ok(cross_entropy(&post, targets))
    }

    /// Exact gradients of the mean batch cross-entropy.
    pub fn gradient(&self, batch: ArrayView2<f64>, targets: &[usize]) -> Result<Gradients> {
        self.check_dim(batch.ncols())?;
        self.check_targets(batch.nrows(), targets)?;
        let x = self.normalize_f64(batch);
        Ok(self.backprop(x.view(), targets).0)
    }

    fn normalize_f64(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let mut x = raw.to_owned();
        for mut row in x.outer_iter_mut() {
            for ((v, m), s) in row
                .iter_mut()
                .zip(&self.normalizer.mean)
                .zip(&self.normalizer.inv_std)
            {
                *v = (*v - m) * s;
            }
        }
        x
    }

    fn backprop(&self, x: ArrayView2<f64>, targets: &[usize]) -> (Gradients, f64) {
        let n = x.nrows() as f64;
        let (hidden, post) = self.forward_normalized(x);
        let loss = cross_entropy(&post, targets);
        let mut d_out = post;
        for (mut row, &t) in d_out.outer_iter_mut().zip(targets) {
            row[t] -= 1.0;
        }
        d_out /= n;
        let w2 = d_out.t().dot(&hidden);
        let b2 = d_out.sum_axis(Axis(0));
        let mut d_hidden = d_out.dot(&self.w2);
        d_hidden.zip_mut_with(&hidden, |d, h| *d *= h * (1.0 - h));
        let w1 = d_hidden.t().dot(&x);
        let b1 = d_hidden.sum_axis(Axis(0));
        (Gradients { w1, b1, w2, b2 }, loss)
    }
}

fn cross_entropy(post: &Array2<f64>, targets: &[usize]) -> f64 {
    let sum: f64 = post
        .outer_iter()
        .zip(targets)
        .map(|(row, &t)| -row[t].max(f64::MIN_POSITIVE).ln())
        .sum();
    sum / targets.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_units: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 256,
            epochs: 20,
            hidden_units: 256,
            seed: 42,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.hidden_units == 0 {
            return Err(Error::InvalidParameter(
                "batch size and hidden units must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidParameter(
                "validation fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_ce: f64,
    /// Equal to `train_ce` when there is no validation split.
    pub val_ce: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept (1-based; 0 means the initial weights).
    pub best_epoch: usize,
}

/// Minibatch SGD with momentum on frame-level cross-entropy.
///
/// Each matrix contributes all its frames with the attached class id. A
/// `validation_fraction` share of frames is held out; the returned network is
/// the one with the lowest held-out cross-entropy seen after any epoch.
pub fn train(
    dataset: &[(FeatureMatrix, usize)],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() || dataset.iter().all(|(f, _)| f.n_frames() == 0) {
        return Err(Error::Empty("training set"));
    }
    if let Some(&(_, id)) = dataset.iter().find(|(_, c)| *c >= n_classes) {
        return Err(Error::ClassOutOfRange {
            id,
            classes: n_classes,
        });
    }
    let normalizer = fit_normalizer(dataset.iter().map(|(f, _)| f))?;
    let dim = normalizer.dim();

    let total: usize = dataset.iter().map(|(f, _)| f.n_frames()).sum();
    let mut data = Array2::<f32>::zeros((total, dim));
    let mut labels = Vec::with_capacity(total);
    let mut row = vec![0.0f64; dim];
    let mut r = 0;
    for (fm, class) in dataset {
        for src in fm.values.outer_iter() {
            normalizer.apply_row(src, &mut row);
            data.row_mut(r)
                .iter_mut()
                .zip(&row)
                .for_each(|(d, v)| *d = *v as f32);
            labels.push(*class);
            r += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_val = ((total as f64 * config.validation_fraction).round() as usize).min(total - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut net = Network::init(dim, config.hidden_units, n_classes, normalizer, &mut rng)?;
    let mut vel = Gradients {
        w1: Array2::zeros(net.w1.dim()),
        b1: Array1::zeros(net.b1.dim()),
        w2: Array2::zeros(net.w2.dim()),
        b2: Array1::zeros(net.b2.dim()),
    };

    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((idx.len(), dim));
        for (mut dst, &i) in x.outer_iter_mut().zip(idx) {
            dst.iter_mut()
                .zip(data.row(i))
                .for_each(|(d, v)| *d = *v as f64);
        }
        (x, idx.iter().map(|&i| labels[i]).collect())
    };

    let evaluate = |net: &Network, idx: &[usize]| -> (f64, f64) {
        let mut ce = 0.0;
        let mut correct = 0usize;
        for chunk in idx.chunks(1024) {
            let (x, y) = gather(chunk);
            let (_, post) = net.forward_normalized(x.view());
            ce += cross_entropy(&post, &y) * chunk.len() as f64;
            for (p, &t) in post.outer_iter().zip(&y) {
                if argmax(p.as_slice().expect("row-major")) == t {
                    correct += 1;
                }
            }
        }
        (ce / idx.len() as f64, correct as f64 / idx.len() as f64)
    };

    let select_idx: &[usize] = if val_idx.is_empty() { &train_idx } else { &val_idx };
    let mut best = net.clone();
    let mut best_ce = evaluate(&net, select_idx).0;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(config.epochs);
    let (lr, mu) = (config.learning_rate, config.momentum);

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let (x, y) = gather(chunk);
            let (g, loss) = net.backprop(x.view(), &y);
            ce_sum += loss * chunk.len() as f64;
            step(&mut net.w1, &mut vel.w1, &g.w1, lr, mu);
            step(&mut net.b1, &mut vel.b1, &g.b1, lr, mu);
            step(&mut net.w2, &mut vel.w2, &g.w2, lr, mu);
            step(&mut net.b2, &mut vel.b2, &g.b2, lr, mu);
        }
        let train_ce = ce_sum / train_idx.len() as f64;
        let (val_ce, val_accuracy) = if val_idx.is_empty() {
            (train_ce, evaluate(&net, &train_idx).1)
        } else {
            evaluate(&net, &val_idx)
        };
        history.push(EpochStats {
            epoch,
            train_ce,
            val_ce,
            val_accuracy,
        });
        if val_ce < best_ce {
            best_ce = val_ce;
            best = net.clone();
            best_epoch = epoch;
        }
    }
    best.snap_to_f32();
    Ok(TrainOutcome {
        network: best,
        history,
        best_epoch,
    })
}

fn step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    vel: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    lr: f64,
    mu: f64,
) {
    vel.zip_mut_with(grad, |v, g| *v = mu * *v - lr * g);
    *param += &*vel;
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of frames whose arg-max posterior equals the label.
pub fn frame_accuracy(net: &Network, dataset: &[(FeatureMatrix, usize)]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (fm, class) in dataset {
        let post = net.posteriors(fm)?;
        for row in post.outer_iter() {
            if argmax(row.as_slice().expect("row-major")) == *class {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("dataset"));
    }
    Ok(correct as f64 / total as f64)
}

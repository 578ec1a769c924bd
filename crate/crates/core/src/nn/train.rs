//! SGD training, evaluation and batch-norm recalibration for any model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::softmax_cross_entropy;
use super::network::{Model, TrainableModel};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{LasError, Result};
use crate::harness::data::Dataset;

/// Learning-rate policy over a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// Multiply by `factor` at each epoch milestone.
    MultiStep { milestones: Vec<usize>, factor: f64 },
    /// Decay linearly from the base rate to zero over all iterations.
    LinearDecay,
    Constant,
}

impl LrSchedule {
    pub fn lr(&self, base: f64, epoch: usize, iter: usize, total_iters: usize) -> f64 {
        match self {
            LrSchedule::MultiStep { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| epoch >= m).count();
                base * factor.powi(passed as i32)
            }
            LrSchedule::LinearDecay => {
                if total_iters == 0 {
                    base
                } else {
                    base * (1.0 - iter as f64 / total_iters as f64)
                }
            }
            LrSchedule::Constant => base,
        }
    }
}

fn default_bn_momentum() -> f64 {
    0.1
}

/// SGD with Nesterov momentum and L2 weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Weight of the newest batch in the running BN statistics.
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub pad_crop: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.1,
            lr_schedule: LrSchedule::MultiStep {
                milestones: vec![60, 120, 160],
                factor: 0.2,
            },
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 200,
            rng_seed: 0,
            bn_momentum: 0.1,
            hflip: false,
            pad_crop: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr.is_nan() || self.base_lr <= 0.0 || !self.base_lr.is_finite() {
            return Err(LasError::Config(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LasError::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(LasError::Config("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(LasError::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(LasError::Config("bn_momentum must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub val_accuracy: Option<f64>,
}

/// Shuffled mini-batch order whose RNG stream continues across calls.
#[derive(Clone, Debug)]
pub struct BatchStream {
    rng: ChaCha8Rng,
    len: usize,
    batch_size: usize,
}

impl BatchStream {
    pub fn new(seed: u64, len: usize, batch_size: usize) -> Self {
        BatchStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            len,
            batch_size,
        }
    }

    /// Index batches for one epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len).collect();
        order.shuffle(&mut self.rng);
        order.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// One SGD step on a batch: forward in training mode, running-stat update,
/// backward, parameter update. Returns the batch loss.
pub fn train_step<T: Scalar, M: TrainableModel<T> + ?Sized>(
    model: &mut M,
    x: &Tensor<T>,
    labels: &[usize],
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut layers = model.layers_mut();
    let (logits, tape) = layers.as_layers().forward(x, true)?;
    let tape = tape.expect("training forward records a tape");
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels);
    if !loss.is_finite() {
        return Err(LasError::NonFinite { layer: "loss".into() });
    }
    layers.update_running_stats(&tape, cfg.bn_momentum);
    layers.zero_grad();
    layers.backward(&tape, dlogits);
    layers.sgd_step(lr, cfg.momentum, cfg.weight_decay);
    Ok(loss)
}

/// Train for `cfg.epochs` with the configured schedule, then evaluate on `val`
/// when given.
pub fn train<T: Scalar, M: TrainableModel<T> + ?Sized>(
    model: &mut M,
    train_set: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(LasError::domain("empty training set"));
    }
    let mut stream = BatchStream::new(cfg.rng_seed, train_set.len(), cfg.batch_size);
    let total = cfg.epochs * stream.batches_per_epoch();
    let mut summary = TrainSummary {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        steps: 0,
        val_accuracy: None,
    };
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let batches = stream.epoch();
        let nb = batches.len();
        for (b, idx) in batches.into_iter().enumerate() {
            let (x, labels) = train_set.batch_augmented::<T, _>(&idx, cfg.hflip, cfg.pad_crop, stream.rng());
            let lr = cfg.lr_schedule.lr(cfg.base_lr, epoch, summary.steps, total);
            let loss = train_step(model, &x, &labels, lr, cfg).map_err(|e| match e {
                LasError::NonFinite { .. } => LasError::Diverged {
                    epoch,
                    step: b,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            summary.steps += 1;
            sum += loss;
        }
        summary.epoch_losses.push(sum / nb as f64);
    }
    if let Some(val) = val {
        summary.val_accuracy = Some(evaluate(model, val, cfg.batch_size.max(64))?);
    }
    Ok(summary)
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy in inference mode.
pub fn evaluate<T: Scalar, M: Model<T> + ?Sized>(model: &M, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(LasError::domain("cannot evaluate on an empty set"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch::<T>(chunk);
        let logits = model.logits(&x)?;
        correct += count_correct(&logits, &labels);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Rows of `logits` whose argmax equals the label.
pub fn count_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(i, &l)| argmax(logits.row(*i)) == l)
        .count()
}

/// Streaming per-channel count / mean / sum of squared deviations.
#[derive(Clone, Debug, Default)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn merge(&mut self, count: usize, mean: &[f64], var: &[f64]) {
        let nb = count as f64;
        if self.count == 0.0 {
            self.count = nb;
            self.mean = mean.to_vec();
            self.m2 = var.iter().map(|v| v * nb).collect();
            return;
        }
        let na = self.count;
        let n = na + nb;
        for c in 0..mean.len() {
            let delta = mean[c] - self.mean[c];
            self.mean[c] += delta * nb / n;
            self.m2[c] += var[c] * nb + delta * delta * na * nb / n;
        }
        self.count = n;
    }
}

/// Replace every BN layer's running statistics with the exact aggregate mean
/// and (biased) variance of its inputs over `calib`, computed in one pass of
/// training-mode forwards.
pub fn recalc_bn<T: Scalar, M: TrainableModel<T> + ?Sized>(model: &mut M, calib: &Dataset, batch_size: usize) -> Result<()> {
    if calib.is_empty() {
        return Err(LasError::domain("empty calibration set"));
    }
    let idx: Vec<usize> = (0..calib.len()).collect();
    let mut acc: Vec<Moments> = Vec::new();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = calib.batch::<T>(chunk);
        let layers = model.layers();
        let (_, tape) = layers.forward(&x, true)?;
        let tape = tape.expect("training forward records a tape");
        let caches = tape.bn_caches();
        if acc.is_empty() {
            acc = vec![Moments::default(); caches.len()];
        }
        for (m, c) in acc.iter_mut().zip(caches) {
            m.merge(c.count, &c.mean, &c.var);
        }
    }
    let mut layers = model.layers_mut();
    for (bn, m) in layers.batch_norms_mut().into_iter().zip(&acc) {
        for c in 0..bn.channels {
            bn.running_mean[c] = T::of(m.mean[c]);
            bn.running_var[c] = T::of(m.m2[c] / m.count);
        }
    }
    Ok(())
}

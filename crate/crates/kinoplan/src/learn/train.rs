//! Loss, exact gradients over a batch, and the training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{Dataset, DatasetRecord};
use super::net::{backward, forward, ModelDims, ModelParams, NetInput, MANEUVER_DIM};
use crate::scalar::{real, Real};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

/// Optimizer and schedule settings (adaptive moment estimation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub loss_curve: Vec<T>,
}

/// Mean squared error over the first `valid` rows (each row averaged over
/// its 3 components); masked rows contribute nothing.
pub fn masked_mse<T: Real>(pred: &[[T; MANEUVER_DIM]], target: &[[T; MANEUVER_DIM]], valid: usize) -> T {
    assert_eq!(pred.len(), target.len());
    assert!(valid >= 1 && valid <= pred.len());
    let mut acc = T::zero();
    for (p, t) in pred.iter().zip(target).take(valid) {
        for c in 0..MANEUVER_DIM {
            let d = p[c] - t[c];
            acc = acc + d * d;
        }
    }
    acc / T::from_usize(MANEUVER_DIM * valid).unwrap()
}

fn masked_mse_grad<T: Real>(
    pred: &[[T; MANEUVER_DIM]],
    target: &[[T; MANEUVER_DIM]],
    valid: usize,
    scale: T,
) -> Vec<[T; MANEUVER_DIM]> {
    let denom = T::from_usize(MANEUVER_DIM * valid).unwrap();
    let two = real::<T>(2.0);
    pred.iter()
        .zip(target)
        .enumerate()
        .map(|(row, (p, t))| {
            let mut g = [T::zero(); MANEUVER_DIM];
            if row < valid {
                for c in 0..MANEUVER_DIM {
                    g[c] = two * (p[c] - t[c]) / denom * scale;
                }
            }
            g
        })
        .collect()
}

fn record_input<T: Real>(r: &DatasetRecord<T>) -> NetInput<'_, T> {
    NetInput { features: &r.features, occupancy: &r.occupancy, heuristic_map: &r.heuristic_map }
}

/// Mean masked loss of a batch.
pub fn loss_batch<T: Real>(m: &ModelParams<T>, batch: &[&DatasetRecord<T>]) -> T {
    let mut acc = T::zero();
    for r in batch {
        let out = forward(m, &record_input(r)).outputs;
        acc = acc + masked_mse(&out, &r.targets, r.valid_count);
    }
    acc / T::from_usize(batch.len()).unwrap()
}

/// Exact gradient of the mean masked batch loss with respect to every
/// parameter, written into `grad` (overwritten). Returns the batch loss.
pub fn backward_batch<T: Real>(m: &ModelParams<T>, batch: &[&DatasetRecord<T>], grad: &mut [T]) -> T {
    assert!(!batch.is_empty());
    for g in grad.iter_mut() {
        *g = T::zero();
    }
    let scale = T::one() / T::from_usize(batch.len()).unwrap();
    let mut loss = T::zero();
    for r in batch {
        let input = record_input(r);
        let trace = forward(m, &input);
        loss = loss + masked_mse(&trace.outputs, &r.targets, r.valid_count);
        let d_out = masked_mse_grad(&trace.outputs, &r.targets, r.valid_count, scale);
        backward(m, &input, &trace, &d_out, grad);
    }
    loss * scale
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: usize,
}

impl<T: Real> Adam<T> {
    fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let b1 = real::<T>(cfg.beta1);
        let b2 = real::<T>(cfg.beta2);
        let lr = real::<T>(cfg.learning_rate);
        let eps = real::<T>(cfg.epsilon);
        let one = T::one();
        // Bias corrections in f64 to keep the powers accurate.
        let c1 = real::<T>(1.0 - cfg.beta1.powi(self.t as i32));
        let c2 = real::<T>(1.0 - cfg.beta2.powi(self.t as i32));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Mini-batch training with seeded shuffling; deterministic for a fixed
/// seed and dataset.
pub fn train<T: Real>(
    ds: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainReport<T>), TrainError> {
    if ds.records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.learning_rate < 0.0 {
        return Err(TrainError::InvalidConfig("batch_size >= 1 and learning_rate >= 0 required".into()));
    }
    let dims = ModelDims::new(ds.meta.grid_size, ds.meta.exploratory);
    let mut model = ModelParams::<T>::init(dims, cfg.seed);
    let mut adam = Adam::new(model.param_count());
    let mut grad = vec![T::zero(); model.param_count()];
    let mut order: Vec<usize> = (0..ds.records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6eu64);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = T::zero();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&DatasetRecord<T>> = chunk.iter().map(|&i| &ds.records[i]).collect();
            let loss = backward_batch(&model, &batch, &mut grad);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            adam.step(model.data_mut(), &grad, cfg);
            epoch_loss = epoch_loss + loss;
            batches += 1;
        }
        curve.push(epoch_loss / T::from_usize(batches).unwrap());
    }
    Ok((model, TrainReport { loss_curve: curve }))
}

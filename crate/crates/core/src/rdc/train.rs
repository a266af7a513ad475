//! Minibatch Adam training of the correction regressor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::Mlp;
use super::model::{RdcModel, TrainMeta};
use super::samples::RdcSample;
use super::RdcError;
use crate::DEFAULT_K;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub hidden_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 200,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.0667,
            seed: 0,
            hidden_layers: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Mean training loss over each epoch's minibatches (before their update).
    pub train: Vec<f64>,
    /// Validation loss after each epoch.
    pub val: Vec<f64>,
}

/// Flattens samples into row-major input and target matrices.
pub fn stack(samples: &[&RdcSample]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(samples.len() * DEFAULT_K);
    let mut t = Vec::with_capacity(samples.len() * DEFAULT_K);
    for s in samples {
        x.extend_from_slice(&s.input);
        t.extend_from_slice(&s.target);
    }
    (x, t)
}

/// Trains a `k -> k x hidden_layers -> k` network. The validation split is
/// drawn from a seeded shuffle of `samples`; minibatch order is reshuffled
/// every epoch from the same rng.
pub fn train(samples: &[RdcSample], config: &TrainConfig) -> Result<(RdcModel, LossHistory), RdcError> {
    if samples.len() < 2 {
        return Err(RdcError::TooFewSamples(samples.len()));
    }
    let k = samples[0].input.len();
    if k == 0 {
        return Err(RdcError::InputLength { expected: crate::DEFAULT_K, got: 0 });
    }
    if let Some(s) = samples.iter().find(|s| s.input.len() != k || s.target.len() != k) {
        let got = if s.input.len() != k { s.input.len() } else { s.target.len() };
        return Err(RdcError::InputLength { expected: k, got });
    }
    if !(config.lr > 0.0) || config.batch_size == 0 || !(0.0..1.0).contains(&config.val_fraction) {
        return Err(RdcError::InvalidConfig(format!("{config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * config.val_fraction).round() as usize).clamp(1, samples.len() - 1);
    let (train_idx, val_idx) = order.split_at(samples.len() - n_val);
    let mut train_idx = train_idx.to_vec();
    let val: Vec<&RdcSample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let (xv, tv) = stack(&val);

    let sizes = vec![k; config.hidden_layers + 2];
    let mut net = Mlp::he_uniform(&sizes, &mut rng);
    let mut opt = Adam::new(net.params().len(), config.lr, config.beta1, config.beta2, config.eps);
    let mut history = LossHistory::default();
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let b: Vec<&RdcSample> = batch.iter().map(|&i| &samples[i]).collect();
            let (x, t) = stack(&b);
            let (loss, grad) = net.loss_and_grad(&x, &t, b.len());
            if !loss.is_finite() {
                return Err(RdcError::NonFiniteLoss { epoch });
            }
            sum += loss * b.len() as f64;
            opt.step(net.params_mut(), &grad);
        }
        let val_loss = net.loss(&xv, &tv, val.len());
        if !val_loss.is_finite() {
            return Err(RdcError::NonFiniteLoss { epoch });
        }
        history.train.push(sum / train_idx.len() as f64);
        history.val.push(val_loss);
    }
    let meta = TrainMeta {
        lr: config.lr,
        epochs: config.epochs,
        batch: config.batch_size,
        seed: config.seed,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
        init: "he_uniform".into(),
        n_train: train_idx.len(),
        n_val,
    };
    Ok((RdcModel::from_mlp(&net, meta), history))
}

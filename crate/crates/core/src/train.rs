//! Mini-batch training with validation, plateau scheduling and early stopping.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_pcg::Pcg32;
use serde::Serialize;

use crate::data::{Batch, Dataset, Split, Transform};
use crate::error::{Error, Result};
use crate::loss::{class_weights, total_loss, LossWeights};
use crate::model::{HybridModel, ModelOutput};
use crate::nn::Mode;
use crate::optim::{clip_grad_norm, AdamW, EarlyStopping, PlateauScheduler};
use crate::tensor::Tensor;

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const EPOCH_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    pub early_stopping_patience: usize,
    pub loss: LossWeights,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 0.011,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            plateau_factor: 0.5,
            plateau_patience: 3,
            early_stopping_patience: 5,
            loss: LossWeights::default(),
            augment: true,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 (batch normalisation)".into()));
        }
        let positive = [self.learning_rate, self.clip_norm, self.plateau_factor];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate, clip norm and plateau factor must be positive".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Config("plateau patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn correct(logits: &Tensor<f32>, labels: &[usize]) -> usize {
    labels.iter().enumerate().filter(|&(n, &l)| argmax(logits.batch_item(n)) == l).count()
}

/// Runs eval-mode inference over `indices` in chunks of `batch_size`.
pub fn for_each_batch(
    model: &HybridModel<f32>,
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
    mut f: impl FnMut(&[usize], &Batch, &ModelOutput<f32>) -> Result<()>,
) -> Result<()> {
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = dataset.batch(chunk, None)?;
        let out = model.predict(&batch.images)?;
        f(chunk, &batch, &out)?;
    }
    Ok(())
}

fn zero_masks(batch: &Batch) -> Tensor<f32> {
    Tensor::zeros(batch.images.shape())
}

/// Mean total loss and accuracy of `indices` in eval mode.
pub fn evaluate_loss(
    model: &HybridModel<f32>,
    dataset: &Dataset,
    indices: &[usize],
    weights: &[f64],
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0;
    for_each_batch(model, dataset, indices, config.batch_size, |chunk, batch, out| {
        let masks = batch.masks.clone().unwrap_or_else(|| zero_masks(batch));
        let l = total_loss(&out.logits, &batch.labels, weights, &out.attention, &masks, &config.loss)?;
        loss += l.total * chunk.len() as f64;
        hits += correct(&out.logits, &batch.labels);
        Ok(())
    })?;
    let n = indices.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

pub fn train(model: &mut HybridModel<f32>, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(model, dataset, config, |_| {})
}

/// Like [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    model: &mut HybridModel<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.size != model.config().input_size {
        return Err(Error::Config(format!(
            "dataset images are {0}×{0} but the model expects {1}×{1}",
            dataset.size,
            model.config().input_size
        )));
    }
    if dataset.num_classes() != model.config().num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model has {}",
            dataset.num_classes(),
            model.config().num_classes
        )));
    }
    let mut train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.len() < 2 {
        return Err(Error::Data("training split needs at least 2 samples".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let needs_masks = config.loss.beta > 0.0;
    if needs_masks && dataset.samples.iter().any(|s| s.mask.is_none()) {
        return Err(Error::Data("attention loss needs a mask for every sample".into()));
    }
    let labels: Vec<usize> = train_idx.iter().map(|&i| dataset.samples[i].label).collect();
    let weights = class_weights(&labels, dataset.num_classes())?;

    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut scheduler = PlateauScheduler::new(config.learning_rate, config.plateau_factor, config.plateau_patience);
    let mut stopper = EarlyStopping::new(config.early_stopping_patience);
    let mut best: Option<(usize, HybridModel<f32>)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let epoch_seed = config.seed ^ (epoch as u64).wrapping_mul(EPOCH_MIX);
        train_idx.shuffle(&mut Pcg32::new(epoch_seed, SHUFFLE_STREAM));
        let lr = scheduler.lr();
        opt.lr = lr;
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0usize, 0usize);
        for chunk in train_idx.chunks(config.batch_size) {
            if chunk.len() < 2 {
                // batch normalisation cannot train on a single sample
                continue;
            }
            let transforms: Option<Vec<Transform>> = config.augment.then(|| {
                chunk
                    .iter()
                    .map(|&i| Transform::sample(&mut Pcg32::new(epoch_seed, i as u64)))
                    .collect()
            });
            let batch = dataset.batch(chunk, transforms.as_deref())?;
            let out = model.forward(&batch.images, Mode::Train)?;
            let masks = batch.masks.clone().unwrap_or_else(|| zero_masks(&batch));
            let loss = total_loss(&out.logits, &batch.labels, &weights, &out.attention, &masks, &config.loss)?;
            if !loss.total.is_finite() {
                return Err(Error::Data(format!("non-finite training loss at epoch {epoch}")));
            }
            let grad_att = needs_masks.then_some(&loss.grad_attention);
            let mut grads = model.backward(&loss.grad_logits, grad_att)?;
            model.clear_cache();
            let mut grad_refs: Vec<&mut Tensor<f32>> = grads.tensors_mut().into_iter().map(|(_, t)| t).collect();
            clip_grad_norm(&mut grad_refs, config.clip_norm);
            let grad_refs: Vec<&Tensor<f32>> = grad_refs.into_iter().map(|t| &*t).collect();
            let mut params: Vec<&mut Tensor<f32>> = model.params_mut().into_iter().map(|(_, t)| t).collect();
            opt.step(&mut params, &grad_refs)?;
            loss_sum += loss.total * chunk.len() as f64;
            hits += correct(&out.logits, &batch.labels);
            seen += chunk.len();
        }
        let (val_loss, val_acc) = evaluate_loss(model, dataset, &val_idx, &weights, config)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: hits as f64 / seen.max(1) as f64,
            val_loss,
            val_acc,
            lr,
        };
        progress(&record);
        history.push(record);
        scheduler.step(val_loss);
        if stopper.update(val_loss) || best.is_none() {
            best = Some((epoch, model.clone()));
        }
        if config.early_stopping_patience > 0 && stopper.should_stop() {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (best_epoch, best_model) = best.expect("at least one epoch ran");
    *model = best_model;
    Ok(TrainReport {
        history,
        best_epoch,
        stopped_early,
    })
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for row in history {
        w.serialize(row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

//! The epoch loop: seeded shuffling, augmentation, Adam updates, per-epoch
//! validation, best-by-val-Dice checkpointing, plateau decay and early
//! stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{
    augment, resize_bilinear, resize_mask_nearest, to_batch, AugmentConfig, LabeledFrame,
    Preprocess,
};
use crate::error::{data_err, Result};
use crate::metrics::{ConfusionMatrix, EvalReport};
use crate::model::{backward, forward, forward_cached, ModelParams, NUM_CLASSES};
use crate::optim::{adam_step, ce_loss, AdamConfig, AdamState, EarlyStopping, PlateauScheduler};
use crate::runtime::argmax_channels;
use crate::seed::{rng_for, rng_for_indexed};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub plateau_patience: usize,
    pub plateau_factor: f32,
    pub plateau_min_delta: f64,
    pub lr_min: f32,
    pub early_stop_patience: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub preprocess: Preprocess,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 4,
            max_epochs: 200,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            plateau_patience: 10,
            plateau_factor: 0.5,
            plateau_min_delta: 1e-4,
            lr_min: 1e-6,
            early_stop_patience: 30,
            max_steps: None,
            seed: 0,
            preprocess: Preprocess::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(data_err!("lr must be positive, got {}", self.lr));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(data_err!("plateau_factor must be in (0, 1), got {}", self.plateau_factor));
        }
        if self.batch_size == 0 {
            return Err(data_err!("batch_size must be at least 1"));
        }
        if self.preprocess.size == 0 || self.preprocess.size % 4 != 0 {
            return Err(data_err!("image size must be a positive multiple of 4, got {}", self.preprocess.size));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_dice: f64,
    pub val_miou: f64,
    /// Learning rate used during this epoch.
    pub lr: f32,
    /// Optimizer steps taken so far, this epoch included.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_dice: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_dice,val_miou,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:e}",
                e.epoch, e.train_loss, e.val_loss, e.val_dice, e.val_miou, e.lr
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation Dice.
    pub best: ModelParams<f32>,
    pub last: ModelParams<f32>,
    pub log: TrainLog,
}

/// Resizes frames to the network size once, ahead of per-epoch work.
fn to_network_size(frames: &[LabeledFrame], size: u32) -> Vec<LabeledFrame> {
    frames
        .par_iter()
        .map(|f| LabeledFrame {
            id: f.id.clone(),
            image: resize_bilinear(&f.image, size, size),
            mask: resize_mask_nearest(&f.mask, size, size),
        })
        .collect()
}

const EVAL_CHUNK: usize = 8;

/// Mean CE loss and confusion-matrix metrics at network resolution.
pub fn evaluate_params(
    params: &ModelParams<f32>,
    frames: &[LabeledFrame],
    pre: &Preprocess,
) -> Result<(f64, EvalReport)> {
    if frames.is_empty() {
        return Err(data_err!("nothing to evaluate"));
    }
    let mut cm = ConfusionMatrix::new(NUM_CLASSES);
    let mut loss_sum = 0.0;
    let mut pixels = 0usize;
    for chunk in frames.chunks(EVAL_CHUNK) {
        let (x, masks) = to_batch(chunk, pre)?;
        let logits = forward(params, &x)?;
        let (loss, _) = ce_loss(&logits, &masks)?;
        loss_sum += loss * masks.len() as f64;
        pixels += masks.len();
        let plane = logits.shape().plane();
        for n in 0..chunk.len() {
            cm.accumulate(&argmax_channels(&logits, n), &masks[n * plane..(n + 1) * plane])?;
        }
    }
    Ok((loss_sum / pixels as f64, cm.report()))
}

pub fn train(
    train_set: &[LabeledFrame],
    val_set: &[LabeledFrame],
    model: ModelParams<f32>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(train_set, val_set, model, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    train_set: &[LabeledFrame],
    val_set: &[LabeledFrame],
    model: ModelParams<f32>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(data_err!("training set is empty"));
    }
    if val_set.is_empty() {
        return Err(data_err!("validation set is empty"));
    }
    let size = config.preprocess.size;
    let train_frames = to_network_size(train_set, size);
    let val_frames = to_network_size(val_set, size);

    let mut params = model;
    let mut adam = AdamState::new(&params);
    let mut adam_cfg = config.adam();
    let mut plateau = PlateauScheduler::new(
        config.lr,
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_min_delta,
        config.lr_min,
    );
    let mut early = EarlyStopping::new(config.early_stop_patience, 0.0);

    let mut log = TrainLog {
        initial_val_loss: evaluate_params(&params, &val_frames, &config.preprocess)?.0,
        best_val_dice: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = params.clone();
    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..train_frames.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        let mut rng = rng_for_indexed(config.seed, "shuffle", epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let lr = adam_cfg.lr;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut out_of_steps = false;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<LabeledFrame> = idx
                .par_iter()
                .map(|&i| {
                    let f = &train_frames[i];
                    let mut rng = rng_for(config.seed, &format!("augment/{epoch}/{}", f.id));
                    augment(f, &config.augment, &mut rng)
                })
                .collect();
            let (x, masks) = to_batch(&batch, &config.preprocess)?;
            let (logits, cache) = forward_cached(&params, &x)?;
            let (loss, dlogits) = ce_loss(&logits, &masks)?;
            let grads = backward(&params, &cache, &dlogits)?;
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
            loss_sum += loss;
            batches += 1;
            steps += 1;
            if config.max_steps.is_some_and(|m| steps >= m) {
                out_of_steps = true;
                break;
            }
        }

        let (val_loss, report) = evaluate_params(&params, &val_frames, &config.preprocess)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss,
            val_dice: report.mean_dice,
            val_miou: report.miou,
            lr,
            steps,
        };
        on_epoch(&record);
        if record.val_dice > log.best_val_dice {
            log.best_val_dice = record.val_dice;
            log.best_epoch = epoch;
            best = params.clone();
        }
        adam_cfg.lr = plateau.step(record.val_dice);
        let stop = early.step(record.val_dice);
        log.epochs.push(record);
        if out_of_steps {
            break 'epochs;
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        last: params,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, ArchConfig};
    use crate::synth::{generate_dataset, Difficulty};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            preprocess: Preprocess {
                size: 32,
                clahe: None,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn frames(n: usize) -> Vec<LabeledFrame> {
        generate_dataset(n, Difficulty::Easy, 1, 32)
            .unwrap()
            .into_iter()
            .map(|s| s.frame)
            .collect()
    }

    #[test]
    fn log_has_one_row_per_epoch_and_is_reproducible() {
        let data = frames(6);
        let model = build(ArchConfig::default(), 0).unwrap();
        let cfg = tiny_config();
        let a = train(&data[..4], &data[4..], model.clone(), &cfg).unwrap();
        let b = train(&data[..4], &data[4..], model, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best, b.best);
        assert_eq!(a.log.epochs.len(), 3);
        assert_eq!(a.log.to_csv().lines().count(), 4);
        assert!((a.log.initial_val_loss - 3f64.ln()).abs() < 0.3);
    }

    #[test]
    fn best_checkpoint_reproduces_best_val_dice() {
        let data = frames(6);
        let model = build(ArchConfig::default(), 4).unwrap();
        let cfg = tiny_config();
        let out = train(&data[..4], &data[4..], model, &cfg).unwrap();
        let (_, r) = evaluate_params(&out.best, &to_network_size(&data[4..], 32), &cfg.preprocess).unwrap();
        assert_eq!(r.mean_dice, out.log.best_val_dice);
        let last = out.log.epochs.last().unwrap().val_dice;
        assert!(out.log.best_val_dice >= last);
    }

    #[test]
    fn empty_or_bad_inputs_are_rejected() {
        let data = frames(2);
        let model = build(ArchConfig::default(), 0).unwrap();
        assert!(train(&[], &data, model.clone(), &tiny_config()).is_err());
        let bad = TrainConfig {
            plateau_factor: 1.5,
            ..tiny_config()
        };
        assert!(train(&data, &data, model, &bad).is_err());
    }
}

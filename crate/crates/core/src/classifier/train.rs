use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_sample, predict_full, sample_label, Classifier, ClassifierError, EncodedSample};
use crate::corpus::RelationSample;

/// Training configuration. The key set is fixed; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 13,
            epochs: 30,
            patience: 5,
            batch_size: 16,
            learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_micro_f1: f64,
    pub stopped_early: bool,
    /// `"dev"`, or `"train"` when no dev samples were given.
    pub monitored_on: String,
}

pub trait Trainable: Classifier + Clone {
    /// Clears learned parameters.
    fn reset(&mut self);

    /// One gradient step on a batch of (encoded sample, gold label index);
    /// returns the mean loss.
    fn train_batch(&mut self, batch: &[(&EncodedSample, usize)], learning_rate: f64) -> f64;

    fn check_labels(&self, samples: &[RelationSample]) -> Result<(), ClassifierError>;
}

fn accuracy<C: Classifier + ?Sized>(c: &C, samples: &[RelationSample]) -> Result<f64, ClassifierError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        if predict_full(c, s)?.predicted == sample_label(s) {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Mini-batch training with early stopping on dev micro-F1 (accuracy in the
/// single-label setting). The model is left at its best epoch.
pub fn fit<T: Trainable>(
    model: &mut T,
    train: &[RelationSample],
    dev: &[RelationSample],
    cfg: &TrainConfig,
) -> Result<TrainingReport, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(ClassifierError::Config(
            "batch_size, epochs and learning_rate must be positive".into(),
        ));
    }
    model.check_labels(train)?;
    model.check_labels(dev)?;
    let labels = model.label_set().clone();
    let encoded: Vec<(EncodedSample, usize)> = train
        .iter()
        .map(|s| {
            let gold = labels.index_of(sample_label(s)).expect("checked");
            encode_sample(s, &s.all_tokens()).map(|e| (e, gold))
        })
        .collect::<Result<_, _>>()?;
    let monitor = if dev.is_empty() { train } else { dev };

    model.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut epochs = Vec::new();
    let mut wait = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&EncodedSample, usize)> = chunk.iter().map(|&i| (&encoded[i].0, encoded[i].1)).collect();
            loss_sum += model.train_batch(&batch, cfg.learning_rate);
            batches += 1;
        }
        let f1 = accuracy(model, monitor)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_micro_f1: f1,
        });
        if f1 > best.0 {
            best = (f1, epoch, model.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    let (best_f1, best_epoch, best_model) = best;
    *model = best_model;
    Ok(TrainingReport {
        seed: cfg.seed,
        epochs,
        best_epoch,
        best_dev_micro_f1: best_f1,
        stopped_early,
        monitored_on: if dev.is_empty() { "train" } else { "dev" }.into(),
    })
}

//! Mini-batch SGD on the contrastive objective, with early stopping on
//! held-out seen-class accuracy.

mod config;
mod objective;

use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{build_prototypes, l2_normalize, pool_clips, project, AlignmentModel, Modality};
use crate::data::{validate_split, ClassSemantics, DatasetManifest, EmbeddingVector, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::best_candidate;

pub use config::{InitScheme, TrainConfig};
pub use objective::{
    contrastive_loss, loss_gradients, Batch, ContrastiveObjective, GradientPair, LossOutput,
};

/// `W <- W - lr * dW` for both projections. The temperature is untouched.
pub fn sgd_step(
    model: &AlignmentModel,
    grads: &GradientPair,
    learning_rate: f64,
) -> Result<AlignmentModel> {
    if !(learning_rate.is_finite() && learning_rate >= 0.0) {
        return Err(Error::invalid(format!(
            "invalid learning rate {learning_rate}"
        )));
    }
    let check = |w: ndarray::ArrayView2<'_, f64>, g: &Array2<f64>, what: &str| -> Result<()> {
        if w.dim() != g.dim() {
            return Err(Error::invalid(format!(
                "{what} gradient has shape {:?}, parameters have {:?}",
                g.dim(),
                w.dim()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite {what} gradient")));
        }
        Ok(())
    };
    check(model.visual_proj(), &grads.visual, "visual")?;
    check(model.text_proj(), &grads.text, "text")?;
    let visual = &model.visual_proj() - &(&grads.visual * learning_rate);
    let text = &model.text_proj() - &(&grads.text * learning_rate);
    AlignmentModel::new(visual, text, model.tau())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that ran; 0 if none did.
    pub stopping_epoch: usize,
    /// Epoch whose model was returned; 0 means the initial model.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["epoch", "train_loss", "val_acc", "val_loss"])
            .map_err(to_io)?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_acc.to_string(),
                r.val_loss.to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn initial_model(
    config: &TrainConfig,
    visual_dim: usize,
    text_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AlignmentModel> {
    let shared = config.shared_dim.unwrap_or(visual_dim.min(text_dim));
    let model = match config.init_scheme {
        InitScheme::SeededUniform => {
            AlignmentModel::seeded_uniform(shared, visual_dim, text_dim, config.tau, rng)
        }
        InitScheme::IdentityPadded => {
            AlignmentModel::identity_padded(shared, visual_dim, text_dim, config.tau)
        }
    }?;
    if config.init_gain == 1.0 {
        return Ok(model);
    }
    let (visual, text, tau) = model.into_parts();
    AlignmentModel::new(visual * config.init_gain, text * config.init_gain, tau)
}

/// Pooled training and validation samples with labels into the sorted
/// seen-class list.
type Samples = Vec<(EmbeddingVector, usize)>;

fn holdout(
    manifest: &DatasetManifest,
    seen: &[&ClassSemantics],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Samples, Samples)> {
    let by_class = manifest.videos_by_class();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, class) in seen.iter().enumerate() {
        let mut videos = by_class.get(class.class_id()).cloned().ok_or_else(|| {
            Error::invalid(format!("seen class {:?} has no videos", class.class_id()))
        })?;
        videos.shuffle(rng);
        let n = videos.len();
        let n_val = if n >= 2 {
            ((fraction * n as f64).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        for (i, video) in videos.into_iter().enumerate() {
            let sample = (pool_clips(video.clips())?, label);
            if i < n_val {
                val.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok((train, val))
}

fn seen_accuracy(
    model: &AlignmentModel,
    seen: &[ClassSemantics],
    samples: &Samples,
) -> Result<f64> {
    let table = build_prototypes(model, seen)?;
    let mut correct = 0usize;
    for (pooled, label) in samples {
        let unit = l2_normalize(&project(model, pooled, Modality::Visual)?)?;
        if best_candidate(&unit, &table)?.0 == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Fits both projections on the seen side of `split`.
///
/// Each seen class with at least two videos contributes a seeded, stratified
/// holdout of `validation_fraction` of its videos (at least one, never all).
/// If no class can spare a video, validation falls back to the training
/// videos. Epochs are ranked by validation accuracy, then by lower
/// validation loss. Training stops after `patience` epochs without a strict
/// improvement in that ranking, and the best epoch's model (earliest on
/// exact ties) is returned.
///
/// The result is a deterministic function of the inputs.
pub fn train(
    manifest: &DatasetManifest,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<(AlignmentModel, TrainLog)> {
    validate_split(split, manifest)?;
    config.validate()?;

    let seen: Vec<&ClassSemantics> = split
        .seen
        .iter()
        .map(|id| manifest.class(id).expect("split validated"))
        .collect();
    let seen_owned: Vec<ClassSemantics> = seen.iter().map(|c| (*c).clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = initial_model(config, manifest.visual_dim(), manifest.text_dim(), &mut rng)?;
    let (train_set, val_set) = holdout(manifest, &seen, config.validation_fraction, &mut rng)?;
    let objective = ContrastiveObjective::from_classes(&seen_owned)?;
    let val_set = if val_set.is_empty() {
        train_set.clone()
    } else {
        val_set
    };
    let val_batch = Batch::new(val_set.clone())?;

    let mut log = TrainLog::default();
    let mut best_model = model.clone();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::new(chunk.iter().map(|&i| train_set[i].clone()).collect())?;
            let wrap = |e: Error| Error::Training {
                epoch,
                batch: Some(b),
                source: Box::new(e),
            };
            let (loss, grads) = objective.loss_and_gradients(&model, &batch).map_err(wrap)?;
            model = sgd_step(&model, &grads, config.learning_rate).map_err(wrap)?;
            loss_sum += loss * batch.len() as f64;
        }
        let wrap = |e: Error| Error::Training {
            epoch,
            batch: None,
            source: Box::new(e),
        };
        let val_acc = seen_accuracy(&model, &seen_owned, &val_set).map_err(wrap)?;
        let val_loss = objective.loss(&model, &val_batch).map_err(wrap)?.loss;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_acc,
            val_loss,
        });
        log.stopping_epoch = epoch;
        if val_acc > best.0 || (val_acc == best.0 && val_loss < best.1) {
            best = (val_acc, val_loss);
            best_model = model.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best_model, log))
}

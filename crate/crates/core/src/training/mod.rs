//! Training loops for both networks.

mod data;

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use data::{
    augment8, extract_patch, load_dataset, make_batch, make_batch_with, make_estimator_batch,
    make_restorer_batch, sample_patches, sample_spec, Batch, DegradationRanges,
};

use crate::degrade::Seed;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::{init_network, ArchitectureSpec, NetworkKind, NetworkWeights};
use crate::optim::{adam_step, sgd_step, AdamConfig, AdamState};
use crate::tensor::mse_loss;

// Independent random streams derived from the config seed.
const STREAM_INIT: u64 = 0;
const STREAM_PATCHES: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_VALIDATION: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Sgd { learning_rate: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamConfig::default())
    }
}

impl OptimizerConfig {
    pub fn learning_rate(&self) -> f64 {
        match self {
            OptimizerConfig::Adam(c) => c.learning_rate,
            OptimizerConfig::Sgd { learning_rate } => *learning_rate,
        }
    }

    pub fn with_learning_rate(self, lr: f64) -> Self {
        match self {
            OptimizerConfig::Adam(c) => OptimizerConfig::Adam(AdamConfig {
                learning_rate: lr,
                ..c
            }),
            OptimizerConfig::Sgd { .. } => OptimizerConfig::Sgd { learning_rate: lr },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dataset_dir: PathBuf,
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub ranges: DegradationRanges,
    /// Size of the fixed (augmented) patch set drawn once before training.
    pub patches_per_epoch: usize,
    /// Share of the patch set held out for validation loss.
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dataset_dir: PathBuf::from("data"),
            patch_size: 60,
            batch_size: 128,
            epochs: 80,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            ranges: DegradationRanges::default(),
            patches_per_epoch: 2048,
            validation_fraction: 0.05,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 16 {
            return Err(Error::invalid(format!(
                "patch size must be at least 16, got {}",
                self.patch_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.patches_per_epoch == 0 {
            return Err(Error::invalid("patches per epoch must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 1)"));
        }
        if !(self.optimizer.learning_rate() > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        self.ranges.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// `epoch,train_loss,val_loss,seconds` rows; a missing validation loss is
    /// an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for r in &self.epochs {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{:.3}\n", r.epoch, r.train_loss, val, r.seconds));
        }
        out
    }
}

enum OptimizerState {
    Adam(AdamState),
    Sgd(f64),
}

/// Weights plus optimizer state; one call to [`Trainer::step`] is one
/// minibatch update.
pub struct Trainer {
    weights: NetworkWeights,
    optimizer: OptimizerState,
}

impl Trainer {
    pub fn new(weights: NetworkWeights, optimizer: OptimizerConfig) -> Self {
        let optimizer = match optimizer {
            OptimizerConfig::Adam(cfg) => OptimizerState::Adam(AdamState::new(weights.param_count(), cfg)),
            OptimizerConfig::Sgd { learning_rate } => OptimizerState::Sgd(learning_rate),
        };
        Trainer { weights, optimizer }
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn into_weights(self) -> NetworkWeights {
        self.weights
    }

    /// MSE of the network on `batch` without updating anything.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let out = self.weights.forward(&batch.input)?;
        Ok(mse_loss(&out, &batch.target)?.0)
    }

    /// Forward, backward and one optimizer update. Returns the pre-update
    /// loss.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let (out, cache) = self.weights.forward_train(&batch.input)?;
        let (loss, grad) = mse_loss(&out, &batch.target)?;
        if !loss.is_finite() {
            return Err(Error::invalid("non-finite loss"));
        }
        let grads = self.weights.backward(&cache, &grad)?.flatten();
        let mut params = self.weights.flat_params();
        match &mut self.optimizer {
            OptimizerState::Adam(state) => adam_step(&mut params, &grads, state)?,
            OptimizerState::Sgd(lr) => sgd_step(&mut params, &grads, *lr)?,
        }
        self.weights.set_flat_params(&params)?;
        Ok(loss)
    }
}

/// Loads the dataset named in `config` and trains a network of `kind`.
pub fn train(kind: NetworkKind, config: &TrainingConfig) -> Result<(NetworkWeights, TrainingHistory)> {
    config.validate()?;
    let images = load_dataset(&config.dataset_dir)?;
    train_on_images(kind, config, &images)
}

/// Trains on already-loaded images.
///
/// A fixed set of `patches_per_epoch` augmented patches is cropped once; the
/// tail `validation_fraction` of it is held out. Every epoch visits the
/// training patches in a fresh random order and degrades them on the fly.
/// Validation patches are degraded identically every epoch so their losses
/// are comparable.
pub fn train_on_images(
    kind: NetworkKind,
    config: &TrainingConfig,
    images: &[Image],
) -> Result<(NetworkWeights, TrainingHistory)> {
    config.validate()?;
    let seed = Seed(config.seed);
    let mut weights = init_network(ArchitectureSpec::for_kind(kind), seed.derive(STREAM_INIT))?;
    weights.metadata.seed = config.seed;
    let mut history = TrainingHistory::default();
    if config.epochs == 0 {
        return Ok((weights, history));
    }

    let mut patch_rng = ChaCha8Rng::seed_from_u64(seed.derive(STREAM_PATCHES).0);
    let mut patches = sample_patches(images, config.patch_size, config.patches_per_epoch, &mut patch_rng)?;
    let val_count = ((patches.len() as f64) * config.validation_fraction).round() as usize;
    let val_count = val_count.min(patches.len().saturating_sub(1));
    let validation = patches.split_off(patches.len() - val_count);
    let training = patches;

    let mut trainer = Trainer::new(weights, config.optimizer);
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed.derive(STREAM_TRAIN).0);
    let mut order: Vec<usize> = (0..training.len()).collect();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut train_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_patches: Vec<Image> = chunk.iter().map(|&i| training[i].clone()).collect();
            let batch = make_batch(kind, &batch_patches, &mut train_rng, &config.ranges)?;
            let loss = trainer
                .step(&batch)
                .map_err(|_| Error::NonFiniteLoss { epoch, batch: b })?;
            if !loss.is_finite() || trainer.weights().flat_params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += loss;
            batches += 1;
        }
        let val_loss = if validation.is_empty() {
            None
        } else {
            Some(validation_loss(&trainer, kind, &validation, config, seed)?)
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / batches as f64,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let mut weights = trainer.into_weights();
    weights.metadata.epochs = config.epochs;
    Ok((weights, history))
}

fn validation_loss(
    trainer: &Trainer,
    kind: NetworkKind,
    validation: &[Image],
    config: &TrainingConfig,
    seed: Seed,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.derive(STREAM_VALIDATION).0);
    let mut weighted = 0.0;
    for chunk in validation.chunks(config.batch_size) {
        let batch = make_batch(kind, chunk, &mut rng, &config.ranges)?;
        weighted += trainer.loss(&batch)? * chunk.len() as f64;
    }
    Ok(weighted / validation.len() as f64)
}

//! Seeded mini-batch training with best-validation checkpoint selection.

use gradcore::{mix_seed, AdamConfig, AdamState, Graph, Mode, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::eval::{evaluate, Metrics};
use crate::error::{Error, Result};
use crate::model::{total_loss, ModelConfig, PonNet};
use crate::placesim::Split;

pub const TRAIN_CONFIG_VERSION: u32 = 1;

const SHUFFLE_SALT: u64 = 0x5348_5546;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds both parameter initialization and batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            version: TRAIN_CONFIG_VERSION,
            model: ModelConfig::default(),
            epochs: 60,
            batch_size: 48,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != TRAIN_CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported train config version {}", self.version)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.eps > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        self.model.validate()
    }

    /// Model configuration with the training seed applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { seed: self.seed, ..self.model.clone() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Holds the parameters of the best validation epoch.
    pub model: PonNet,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    /// `1 − last/first` of the epoch-mean training loss.
    pub fn loss_reduction(&self) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(a), Some(b)) => 1.0 - b.train_loss / a.train_loss,
            _ => 0.0,
        }
    }
}

pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(config, data, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(config: &TrainConfig, data: &Dataset, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    config.validate()?;
    if config.model.input_side != data.side {
        return Err(Error::Config(format!("model input side {} does not match dataset side {}", config.model.input_side, data.side)));
    }
    let n = data.split(Split::Train).len();
    if n == 0 || data.split(Split::Valid).is_empty() {
        return Err(Error::Input("training needs non-empty train and validation splits".into()));
    }
    let mut model = PonNet::build(config.model_config())?;
    let heads = model.config().heads;
    let mut adam = AdamState::new(config.adam(), &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, SHUFFLE_SALT));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let abort = |message: String| Error::Training { epoch, batch: b + 1, message };
            let (batch, labels) = data.batch(Split::Train, chunk, heads)?;
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch, Mode::Train)?;
            let terms = total_loss(&mut g, model.config(), &out, &labels)?;
            let loss = g.value(terms.total).item();
            if !loss.is_finite() {
                return Err(abort(format!("non-finite loss {loss}")));
            }
            model.store.zero_grad();
            g.backward(terms.total, &mut model.store)?;
            adam.step(&mut model.store).map_err(|e| abort(e.to_string()))?;
            sum += loss * chunk.len() as f64;
        }
        let val = evaluate(&mut model, data, Split::Valid)?.accuracy;
        let log = EpochLog { epoch, train_loss: sum / n as f64, val_accuracy: val };
        on_epoch(&log);
        history.push(log);
        // later epochs win ties
        if best.as_ref().is_none_or(|(acc, _, _)| val >= *acc) {
            best = Some((val, epoch, model.store.clone()));
        }
    }
    let (_, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainOutcome { model, history, best_epoch })
}

/// Train, then evaluate the best-validation checkpoint on the test split.
pub fn train_and_test(config: &TrainConfig, data: &Dataset) -> Result<(TrainOutcome, Metrics)> {
    let mut outcome = train(config, data)?;
    let mut metrics = evaluate(&mut outcome.model, data, Split::Test)?;
    metrics.attach_training(config.seed, &outcome);
    Ok((outcome, metrics))
}

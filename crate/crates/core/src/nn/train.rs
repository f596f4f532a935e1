//! Minibatch training with early stopping on the dev set.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, LossBreakdown};
use super::model::{Batch, Example, Gradients, Model, ModelInput, ModelSpec};
use super::optim::Adam;
use super::Matrix;
use crate::error::{Error, Result};

/// Every minibatch is split into this many shards whose gradients are
/// summed in index order, so results do not depend on the thread count.
pub const GRADIENT_SHARDS: usize = 4;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            patience: 8,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.batch_size > 0
            && self.weight_decay >= 0.0
            && self.patience > 0
            && self.lr_decay > 0.0
            && self.lr_decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub dev: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev global MSE.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev: LossBreakdown,
}

fn targets(examples: &[&Example]) -> Matrix {
    Matrix::from_fn(examples.len(), 4, |i, j| examples[i].target[j])
}

fn check_examples(spec: &ModelSpec, examples: &[Example], what: &str) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    let width = spec.input_width();
    for (i, ex) in examples.iter().enumerate() {
        let actual = match (&ex.input, spec.family.is_graph()) {
            (ModelInput::Graph(g), true) => Some(g.features.cols()),
            (ModelInput::Views(v), false) if v.num_cameras() == spec.num_cameras => {
                Some(v.features.cols() + v.mask.cols() + v.num_cameras())
            }
            _ => None,
        };
        if actual != Some(width) {
            return Err(Error::Mismatch(format!(
                "{what} example {i} does not match the {} input layout of width {width}",
                spec.family.name()
            )));
        }
    }
    Ok(())
}

/// Loss of `model` over `examples`, computed in parallel chunks and reduced
/// in order.
pub fn evaluate_loss(model: &Model, examples: &[Example]) -> Result<LossBreakdown> {
    if examples.is_empty() {
        return Ok(LossBreakdown::default());
    }
    let parts = examples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<&Example> = chunk.iter().collect();
            let pred = model.forward(&Batch::from_examples(&refs)?)?;
            Ok((batch_loss(&pred, &targets(&refs))?.0, chunk.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = LossBreakdown::default();
    for (l, n) in parts {
        let w = n as f64 / examples.len() as f64;
        total.global += l.global * w;
        total.position += l.position * w;
        total.orientation += l.orientation * w;
    }
    Ok(total)
}

/// Batch loss and gradients, split into [`GRADIENT_SHARDS`] shards.
pub fn minibatch_gradients(model: &Model, batch: &[&Example]) -> Result<(LossBreakdown, Gradients)> {
    let shard_len = batch.len().div_ceil(GRADIENT_SHARDS).max(1);
    let shards: Vec<&[&Example]> = batch.chunks(shard_len).collect();
    let parts = shards
        .par_iter()
        .map(|shard| {
            let b = Batch::from_examples(shard)?;
            model.loss_and_gradients(&b, &targets(shard))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = LossBreakdown::default();
    let mut grads = model.zero_grads();
    for (shard, (l, g)) in shards.iter().zip(parts) {
        let w = shard.len() as f64 / batch.len() as f64;
        loss.global += l.global * w;
        loss.position += l.position * w;
        loss.orientation += l.orientation * w;
        grads.add_scaled(w, &g)?;
    }
    Ok((loss, grads))
}

fn non_finite_to_divergence(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Divergence { epoch },
        other => other,
    }
}

pub fn train(spec: &ModelSpec, train_set: &[Example], dev_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(spec, train_set, dev_set, cfg, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    spec: &ModelSpec,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let model = Model::new(spec.clone(), cfg.seed)?;
    continue_training(model, train_set, dev_set, cfg, on_epoch)
}

/// Trains an existing model in place of a fresh initialization.
pub fn continue_training(
    mut model: Model,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    check_examples(&model.spec, train_set, "training")?;
    check_examples(&model.spec, dev_set, "dev")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut optim = Adam::new(&model, cfg.learning_rate, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (evaluate_loss(&model, dev_set).map_err(non_finite_to_divergence(0))?, model.clone(), 0);
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let diverged = non_finite_to_divergence(epoch);
        order.shuffle(&mut rng);
        let mut train_loss = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = minibatch_gradients(&model, &batch).map_err(&diverged)?;
            if !loss.global.is_finite() || !grads.tensors().all(Matrix::is_finite) {
                return Err(Error::Divergence { epoch });
            }
            let w = batch.len() as f64 / train_set.len() as f64;
            train_loss.global += loss.global * w;
            train_loss.position += loss.position * w;
            train_loss.orientation += loss.orientation * w;
            optim.step(&mut model, &grads);
        }
        if !model.tensors().all(Matrix::is_finite) {
            return Err(Error::Divergence { epoch });
        }
        let dev = evaluate_loss(&model, dev_set).map_err(&diverged)?;
        if !dev.global.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let record = EpochRecord {
            epoch,
            train: train_loss,
            dev,
        };
        on_epoch(&record);
        history.push(record);
        if dev.global < best.0.global {
            best = (dev, model.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        optim.learning_rate *= cfg.lr_decay;
    }
    let (best_dev, model, best_epoch) = best;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_dev,
    })
}

/// Training history as CSV.
pub fn write_history_csv(history: &[EpochRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epoch",
        "train_global_mse",
        "train_position_mse",
        "train_orientation_mse",
        "dev_global_mse",
        "dev_position_mse",
        "dev_orientation_mse",
    ])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train.global.to_string(),
            r.train.position.to_string(),
            r.train.orientation.to_string(),
            r.dev.global.to_string(),
            r.dev.position.to_string(),
            r.dev.orientation.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

pub fn save_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history_csv(history, file)
}

//! Mini-batch training with best-model checkpoints, learning-rate reduction
//! on a validation-accuracy plateau and early stopping.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{adam_step, loss_sparse_ce, save_model, AdamState, LayerParams, Mode, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Directory for checkpoint files; none are written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stored in checkpoint manifests.
    pub class_names: Vec<String>,
    pub scaler_fingerprint: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 640,
            initial_lr: 1e-3,
            lr_factor: 0.5,
            lr_patience: 2,
            min_lr: 1e-5,
            early_stop_patience: 2,
            seed: 0,
            checkpoint_dir: None,
            class_names: Vec::new(),
            scaler_fingerprint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor must be in (0, 1), got {}", self.lr_factor));
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.initial_lr && self.initial_lr.is_finite()) {
            return bad(format!(
                "need 0 < min_lr <= initial_lr (min_lr={}, initial_lr={})",
                self.min_lr, self.initial_lr
            ));
        }
        Ok(())
    }

    pub fn callbacks(&self) -> CallbackStack {
        CallbackStack {
            lr_factor: self.lr_factor,
            lr_patience: self.lr_patience,
            min_lr: self.min_lr,
            early_stop_patience: self.early_stop_patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub history: Vec<EpochRecord>,
    pub best_val_acc: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Epochs since the last improvement, as seen by the lr callback.
    pub lr_wait: usize,
    /// Epochs since the last improvement, as seen by early stopping.
    pub stop_wait: usize,
    /// Learning rate for the next epoch.
    pub lr: f64,
    /// Epochs at whose end the learning rate was reduced.
    pub lr_reductions: Vec<usize>,
    pub stopped_early: bool,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainingState {
    pub fn new(initial_lr: f64) -> Self {
        TrainingState {
            history: Vec::new(),
            best_val_acc: None,
            best_val_loss: None,
            best_epoch: None,
            lr_wait: 0,
            stop_wait: 0,
            lr: initial_lr,
            lr_reductions: Vec::new(),
            stopped_early: false,
            checkpoint_path: None,
        }
    }

    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])?;
        for r in &self.history {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
                r.lr.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history csv>", e))?;
        Ok(())
    }

    pub fn save_history_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_history_csv(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochOutcome {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

/// The three per-epoch callbacks. Each keeps its own patience counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallbackStack {
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub min_lr: f64,
    pub early_stop_patience: usize,
}

impl CallbackStack {
    /// Records a strict improvement in validation accuracy and resets both
    /// counters, otherwise advances them.
    pub fn checkpoint_step(&self, state: &mut TrainingState, epoch: usize, val_loss: f64, val_acc: f64) -> bool {
        let improved = state.best_val_acc.is_none_or(|b| val_acc > b);
        if improved {
            state.best_val_acc = Some(val_acc);
            state.best_val_loss = Some(val_loss);
            state.best_epoch = Some(epoch);
            state.lr_wait = 0;
            state.stop_wait = 0;
        } else {
            state.lr_wait += 1;
            state.stop_wait += 1;
        }
        improved
    }

    pub fn lr_step(&self, state: &mut TrainingState, epoch: usize, improved: bool) -> bool {
        if improved || state.lr_wait < self.lr_patience {
            return false;
        }
        state.lr_wait = 0;
        let next = (state.lr * self.lr_factor).max(self.min_lr);
        if next < state.lr {
            state.lr = next;
            state.lr_reductions.push(epoch);
            true
        } else {
            false
        }
    }

    pub fn stop_step(&self, state: &mut TrainingState, improved: bool) -> bool {
        let stop = !improved && state.stop_wait >= self.early_stop_patience;
        if stop {
            state.stopped_early = true;
        }
        stop
    }

    /// Checkpoint, then lr reduction, then early stopping.
    pub fn on_epoch_end(&self, state: &mut TrainingState, epoch: usize, val_loss: f64, val_acc: f64) -> EpochOutcome {
        let improved = self.checkpoint_step(state, epoch, val_loss, val_acc);
        let lr_reduced = self.lr_step(state, epoch, improved);
        let stop = self.stop_step(state, improved);
        EpochOutcome { improved, lr_reduced, stop }
    }
}

/// Drives the callbacks with a scripted validation-accuracy sequence, as if
/// each value came from one training epoch. Stops at the first early stop.
pub fn run_scripted(config: &TrainConfig, val_accs: &[f64]) -> TrainingState {
    let stack = config.callbacks();
    let mut state = TrainingState::new(config.initial_lr);
    for (i, &acc) in val_accs.iter().enumerate() {
        let epoch = i + 1;
        state.history.push(EpochRecord {
            epoch,
            train_loss: 0.0,
            train_acc: 0.0,
            val_loss: 1.0 - acc,
            val_acc: acc,
            lr: state.lr,
        });
        if stack.on_epoch_end(&mut state, epoch, 1.0 - acc, acc).stop {
            break;
        }
    }
    state
}

pub fn checkpoint_file_name(epoch: usize, val_loss: f64) -> String {
    format!("checkpoint-{epoch:03}-{val_loss:.4}.model")
}

/// Writes the model when `improved`; returns the file path.
pub fn checkpoint(
    network: &Network<f32>,
    state: &mut TrainingState,
    epoch: usize,
    val_loss: f64,
    improved: bool,
    config: &TrainConfig,
) -> Result<Option<PathBuf>> {
    let Some(dir) = &config.checkpoint_dir else {
        return Ok(None);
    };
    if !improved {
        return Ok(None);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(checkpoint_file_name(epoch, val_loss));
    save_model(&path, network, &config.class_names, config.scaler_fingerprint.as_deref())?;
    state.checkpoint_path = Some(path.clone());
    Ok(Some(path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// Argmax class per sample; ties go to the lower index.
    pub predictions: Vec<usize>,
    /// Softmax rows exactly as produced by the network.
    pub probabilities: Vec<Vec<f64>>,
}

const EVAL_BATCH: usize = 1024;

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode loss, accuracy, predictions and probabilities.
pub fn evaluate(network: &Network<f32>, dataset: &Dataset) -> Result<Evaluation> {
    let n = dataset.len();
    let mut probabilities = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let x = dataset.inputs.select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i]).collect();
        let p = network.predict(&x)?;
        loss_sum += loss_sparse_ce(&p, &labels)? * chunk.len() as f64;
        for r in 0..chunk.len() {
            probabilities.push(p.row(r).iter().map(|&v| v as f64).collect::<Vec<f64>>());
        }
    }
    let predictions: Vec<usize> = probabilities.iter().map(|r| argmax(r)).collect();
    let correct = predictions.iter().zip(&dataset.labels).filter(|(p, l)| p == l).count();
    Ok(Evaluation {
        loss: if n == 0 { 0.0 } else { loss_sum / n as f64 },
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        predictions,
        probabilities,
    })
}

/// Trains `network` and returns it restored to the best validation epoch.
pub fn train(
    mut network: Network<f32>,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Network<f32>, TrainingState)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let stack = config.callbacks();
    let mut state = TrainingState::new(config.initial_lr);
    let mut adam = AdamState::for_network(&network, config.initial_lr);
    let mut best: Option<(Vec<LayerParams<f32>>, u64)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x7a1, epoch as u64]));
        order.shuffle(&mut rng);
        let lr = state.lr;
        adam.learning_rate = lr;
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let x = train_set.inputs.select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (probs, cache) = network.forward(&x, Mode::Train)?;
            let loss = loss_sparse_ce(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            for (r, &l) in labels.iter().enumerate() {
                let row: Vec<f64> = probs.row(r).iter().map(|&v| v as f64).collect();
                if argmax(&row) == l {
                    correct += 1;
                }
            }
            let grads = network.backward(&cache, &labels)?;
            adam_step(&mut adam, &mut network, &grads)?;
        }
        let val = evaluate(&network, val_set)?;
        if !val.loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let n = train_set.len() as f64;
        state.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
        });
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4} lr {lr:e}",
            loss_sum / n,
            correct as f64 / n,
            val.loss,
            val.accuracy
        );

        let improved = stack.checkpoint_step(&mut state, epoch, val.loss, val.accuracy);
        if improved {
            best = Some((network.params().to_vec(), network.bn_updates()));
            checkpoint(&network, &mut state, epoch, val.loss, improved, config)?;
        }
        stack.lr_step(&mut state, epoch, improved);
        if stack.stop_step(&mut state, improved) {
            break;
        }
    }

    let (params, bn_updates) = best.expect("first epoch always improves");
    let mut restored = Network::from_parts(network.layers().to_vec(), network.input_shape(), params)?;
    restored.set_bn_updates(bn_updates);
    Ok((restored, state))
}

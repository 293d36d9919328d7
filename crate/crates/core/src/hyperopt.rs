//! Swarm search over learning rate, batch size and epoch count. Each cat
//! position in the unit cube decodes to hyperparameters; its fitness is the
//! validation result of a freshly trained network.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cso::{optimize, Bounds, EvalContext, Objective, SwarmConfig, SwarmFitness, SwarmHistory};
use crate::data::Dataset;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::trainer::{train, TrainConfig, TrainingState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Searched on a log10 scale.
    pub lr_range: (f64, f64),
    pub batch_range: (usize, usize),
    pub epoch_range: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr_range: (1e-4, 1e-2),
            batch_range: (32, 1024),
            epoch_range: (1, 5),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lr_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("lr range must satisfy 0 < lo < hi, got ({lo}, {hi})")));
        }
        for (name, (lo, hi)) in [("batch", self.batch_range), ("epoch", self.epoch_range)] {
            if !(lo >= 1 && lo < hi) {
                return Err(Error::Config(format!("{name} range must satisfy 1 <= lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        (self.lr_range.0..=self.lr_range.1).contains(&hp.learning_rate)
            && (self.batch_range.0..=self.batch_range.1).contains(&hp.batch_size)
            && (self.epoch_range.0..=self.epoch_range.1).contains(&hp.epochs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

/// Validation accuracy first, lower validation loss breaks ties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub val_accuracy: f64,
    pub val_loss: f64,
}

impl Fitness {
    /// Assigned to candidates whose training diverged.
    pub fn worst() -> Self {
        Fitness {
            val_accuracy: 0.0,
            val_loss: f64::INFINITY,
        }
    }
}

impl SwarmFitness for Fitness {
    fn compare(&self, other: &Self) -> Ordering {
        self.val_accuracy
            .total_cmp(&other.val_accuracy)
            .then_with(|| other.val_loss.total_cmp(&self.val_loss))
    }

    fn scalar(&self) -> f64 {
        self.val_accuracy
    }
}

fn int_in(lo: usize, hi: usize, p: f64) -> usize {
    let v = (lo as f64 + p * (hi - lo) as f64).round() as usize;
    v.clamp(lo, hi)
}

/// Maps a point of the unit cube to hyperparameters. Coordinates outside
/// [0, 1] are clamped.
pub fn decode(position: &[f64], space: &SearchSpace) -> Result<HyperParams> {
    if position.len() != 3 {
        return Err(Error::Shape(format!("position has {} coordinates, expected 3", position.len())));
    }
    let p: Vec<f64> = position.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let (lo, hi) = space.lr_range;
    let learning_rate = if p[0] == 0.0 {
        lo
    } else if p[0] == 1.0 {
        hi
    } else {
        let (a, b) = (lo.log10(), hi.log10());
        10f64.powf(a + p[0] * (b - a)).clamp(lo, hi)
    };
    Ok(HyperParams {
        learning_rate,
        batch_size: int_in(space.batch_range.0, space.batch_range.1, p[1]),
        epochs: int_in(space.epoch_range.0, space.epoch_range.1, p[2]),
    })
}

/// Partitions used during the search.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Dataset,
    pub val: Dataset,
}

/// Everything fixed across candidates.
#[derive(Clone, Debug)]
pub struct CandidateSetup<'a> {
    pub datasets: &'a Datasets,
    pub architecture: &'a [LayerSpec],
    pub input_shape: &'a [usize],
    /// Callback settings and checkpoint options; epochs, batch size, learning
    /// rate and seed are replaced per candidate.
    pub base: &'a TrainConfig,
}

pub fn candidate_config(hp: &HyperParams, base: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: hp.epochs,
        batch_size: hp.batch_size,
        initial_lr: hp.learning_rate,
        min_lr: base.min_lr.min(hp.learning_rate),
        seed,
        ..base.clone()
    }
}

/// Trains a fresh network for `hp`, seeded with `seed`.
pub fn train_candidate(hp: &HyperParams, setup: &CandidateSetup<'_>, seed: u64) -> Result<(Network<f32>, TrainingState)> {
    if hp.epochs == 0 || hp.batch_size == 0 || hp.learning_rate.is_nan() || hp.learning_rate <= 0.0 {
        return Err(Error::Config(format!("invalid hyperparameters {hp:?}")));
    }
    let network = Network::new(setup.architecture.to_vec(), setup.input_shape, seed)?;
    train(network, &setup.datasets.train, &setup.datasets.val, &candidate_config(hp, setup.base, seed))
}

/// Validation accuracy and loss of the best epoch of a fresh training run.
pub fn evaluate_candidate(hp: &HyperParams, setup: &CandidateSetup<'_>, seed: u64) -> Result<Fitness> {
    let (_, state) = train_candidate(hp, setup, seed)?;
    Ok(Fitness {
        val_accuracy: state.best_val_acc.expect("at least one epoch"),
        val_loss: state.best_val_loss.expect("at least one epoch"),
    })
}

/// Network seed for one candidate evaluation.
pub fn candidate_seed(global_seed: u64, ctx: EvalContext) -> u64 {
    derive_seed(global_seed, &[ctx.cat as u64, ctx.iteration as u64, ctx.candidate as u64])
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperoptResult {
    pub best: HyperParams,
    pub fitness: Fitness,
    pub best_position: Vec<f64>,
    /// Seed that reproduces the best candidate through [`train_candidate`].
    pub best_seed: u64,
    pub history: SwarmHistory<Fitness>,
    pub evaluations: usize,
}

/// The record written next to the convergence history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub seed: u64,
}

impl HyperoptResult {
    pub fn best_record(&self) -> BestRecord {
        BestRecord {
            lr: self.best.learning_rate,
            batch: self.best.batch_size,
            epochs: self.best.epochs,
            val_accuracy: self.fitness.val_accuracy,
            val_loss: self.fitness.val_loss,
            seed: self.best_seed,
        }
    }

    pub fn write_best_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.best_record())?;
        Ok(())
    }

    pub fn save_best_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_best_json(f)
    }
}

/// Runs the swarm over the unit cube, maximising [`Fitness`]. Diverged
/// candidates score [`Fitness::worst`]; other errors abort the search.
pub fn optimize_hyperparams(
    space: &SearchSpace,
    setup: &CandidateSetup<'_>,
    swarm: &SwarmConfig,
) -> Result<HyperoptResult> {
    space.validate()?;
    let config = SwarmConfig {
        objective: Objective::Maximize,
        ..swarm.clone()
    };
    let bounds = Bounds::uniform(3, 0.0, 1.0)?;
    let fitness_fn = |x: &[f64], ctx: EvalContext| -> Result<Fitness> {
        let hp = decode(x, space)?;
        let seed = candidate_seed(config.seed, ctx);
        match evaluate_candidate(&hp, setup, seed) {
            Err(Error::TrainingDiverged { epoch }) => {
                log::warn!("candidate {hp:?} diverged at epoch {epoch}");
                Ok(Fitness::worst())
            }
            other => {
                if let Ok(f) = &other {
                    log::info!("iter {} cat {} slot {}: {hp:?} -> {f:?}", ctx.iteration, ctx.cat, ctx.candidate);
                }
                other
            }
        }
    };
    let r = optimize(fitness_fn, &bounds, &config)?;
    Ok(HyperoptResult {
        best: decode(&r.best_position, space)?,
        fitness: r.best_fitness,
        best_seed: candidate_seed(config.seed, r.best_context),
        best_position: r.best_position,
        history: r.history,
        evaluations: r.evaluations,
    })
}

use std::path::Path;

use serde_json::json;

use csocnn_core::cso::{IterationRecord, SwarmConfig};
use csocnn_core::hyperopt::{
    decode, optimize_hyperparams, train_candidate, CandidateSetup, Datasets, Fitness, HyperoptResult, SearchSpace,
};
use csocnn_core::nn::{baseline_architecture, save_model};
use csocnn_core::trainer::TrainConfig;
use csocnn_core::Error as CoreError;

use super::{fresh_dir, prepare, with_manifest};
use crate::args::OptimizeArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{ManifestHandle, Seeds};
use crate::plot::{line_chart, Series};
use crate::report::{write_evaluation, write_file, write_history, Partitions};

fn pair<T: Copy>(v: &[T], flag: &str) -> CliResult<(T, T)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(CliError::Usage(format!("--{flag} takes LO,HI"))),
    }
}

/// Row i (1-based) is the swarm after i - 1 move iterations; row 1 is the
/// evaluated initial population.
fn convergence_rows(result: &HyperoptResult) -> Vec<&IterationRecord<Fitness>> {
    std::iter::once(&result.history.initial).chain(&result.history.records).collect()
}

fn write_convergence(out: &Path, result: &HyperoptResult, space: &SearchSpace, manifest: &ManifestHandle) -> CliResult<()> {
    let rows = convergence_rows(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "best_fitness", "mean_fitness", "best_val_loss", "best_lr", "best_batch", "best_epochs"])
        .map_err(CoreError::from)?;
    for (i, r) in rows.iter().enumerate() {
        let hp = decode(&r.best_position, space)?;
        w.write_record([
            (i + 1).to_string(),
            r.best_fitness.val_accuracy.to_string(),
            r.mean_fitness.to_string(),
            r.best_fitness.val_loss.to_string(),
            hp.learning_rate.to_string(),
            hp.batch_size.to_string(),
            hp.epochs.to_string(),
        ])
        .map_err(CoreError::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("<convergence csv>", e.into_error()))?;
    write_file(&out.join("convergence.csv"), &bytes, manifest)?;
    let series = |name: &str, f: fn(&IterationRecord<Fitness>) -> f64| Series {
        name: name.to_string(),
        points: rows.iter().enumerate().map(|(i, r)| ((i + 1) as f64, f(r))).collect(),
    };
    let svg = line_chart(
        "Swarm convergence",
        "iteration",
        "validation accuracy",
        &[series("best_fitness", |r| r.best_fitness.val_accuracy), series("mean_fitness", |r| r.mean_fitness)],
        None,
        None,
    );
    write_file(&out.join("convergence.svg"), svg.as_bytes(), manifest)
}

pub fn run(args: OptimizeArgs) -> CliResult<()> {
    let seeds = Seeds::new(args.out.seed);
    let out = args.out.out.clone();
    let space = SearchSpace {
        lr_range: pair(&args.lr_range, "lr-range")?,
        batch_range: pair(&args.batch_range, "batch-range")?,
        epoch_range: pair(&args.epoch_range, "epoch-range")?,
    };
    space.validate()?;
    let swarm = SwarmConfig {
        n_cats: args.cats as usize,
        mixture_ratio: args.mr,
        smp: args.smp,
        srd: args.srd,
        cdc: args.cdc,
        c1: args.c1,
        max_iters: args.iters as usize - 1,
        seed: seeds.swarm,
        parallel: true,
        ..SwarmConfig::default()
    };
    swarm.validate()?;
    with_manifest("optimize", &out, &args, Some(seeds), |manifest| {
        let p = prepare(&args.data, &seeds, manifest, &out)?;
        let names = p.loaded.codec.names().to_vec();
        let shape = [p.loaded.feature_names.len(), 1, 1];
        let arch = baseline_architecture(names.len());
        let datasets = Datasets { train: p.train.clone(), val: p.val.clone() };
        let base = TrainConfig {
            class_names: names.clone(),
            scaler_fingerprint: Some(p.scaler.fingerprint()),
            ..TrainConfig::default()
        };
        manifest.update(|m| m.config = json!({ "args": m.config.clone(), "search_space": space, "swarm": swarm }));
        let setup = CandidateSetup { datasets: &datasets, architecture: &arch, input_shape: &shape, base: &base };
        let result = optimize_hyperparams(&space, &setup, &swarm)?;
        log::info!("best {:?} -> {:?} after {} evaluations", result.best, result.fitness, result.evaluations);
        write_convergence(&out, &result, &space, manifest)?;
        let best_path = out.join("best_hyperparams.json");
        result.save_best_json(&best_path)?;
        manifest.add_artifact(&best_path)?;

        let checkpoints = fresh_dir(&out.join("checkpoints"))?;
        let retrain = TrainConfig { checkpoint_dir: Some(checkpoints.clone()), ..base.clone() };
        let setup = CandidateSetup { base: &retrain, ..setup };
        let (network, state) = train_candidate(&result.best, &setup, result.best_seed)?;
        let retrained = Fitness {
            val_accuracy: state.best_val_acc.expect("trained"),
            val_loss: state.best_val_loss.expect("trained"),
        };
        if retrained != result.fitness {
            log::warn!("retrained fitness {retrained:?} differs from search fitness {:?}", result.fitness);
        }
        let model_path = out.join("model.csocnn");
        save_model(&model_path, &network, &names, base.scaler_fingerprint.as_deref())?;
        manifest.add_artifact(&model_path)?;
        manifest.add_artifact_dir(&checkpoints)?;
        write_history(&out, &state, manifest)?;
        let parts = Partitions { train: Some(&p.train), val: Some(&p.val), test: &p.test };
        let record = write_evaluation(&out, &network, &names, &parts, manifest)?;
        manifest.set_metrics(json!({
            "best_fitness": [result.fitness.val_accuracy, result.fitness.val_loss],
            "first_iteration_best_fitness": [result.history.initial.best_fitness.val_accuracy, result.history.initial.best_fitness.val_loss],
            "retrained_fitness": [retrained.val_accuracy, retrained.val_loss],
            "best_hyperparams": result.best_record(),
            "evaluations": result.evaluations,
            "table": record.table,
            "test_loss": record.test_loss,
            "load": p.loaded.load,
            "cleaning": p.cleaning,
            "class_names": names,
        }));
        Ok(())
    })
}

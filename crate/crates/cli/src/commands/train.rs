use serde_json::json;

use csocnn_core::nn::{baseline_architecture, save_model, Network};
use csocnn_core::trainer::{train, TrainConfig};

use super::{fresh_dir, prepare, with_manifest};
use crate::args::TrainArgs;
use crate::error::CliResult;
use crate::manifest::Seeds;
use crate::report::{write_evaluation, write_history, Partitions};

pub fn run(args: TrainArgs) -> CliResult<()> {
    let seeds = Seeds::new(args.out.seed);
    let out = args.out.out.clone();
    with_manifest("train", &out, &args, Some(seeds), |manifest| {
        let p = prepare(&args.data, &seeds, manifest, &out)?;
        let names = p.loaded.codec.names().to_vec();
        let d = p.loaded.feature_names.len();
        let network = Network::new(baseline_architecture(names.len()), &[d, 1, 1], seeds.network)?;
        let checkpoints = fresh_dir(&out.join("checkpoints"))?;
        let config = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch,
            initial_lr: args.lr,
            min_lr: TrainConfig::default().min_lr.min(args.lr),
            seed: seeds.shuffle,
            checkpoint_dir: Some(checkpoints.clone()),
            class_names: names.clone(),
            scaler_fingerprint: Some(p.scaler.fingerprint()),
            ..TrainConfig::default()
        };
        manifest.update(|m| m.config = json!({ "args": m.config.clone(), "train_config": config }));
        let (network, state) = train(network, &p.train, &p.val, &config)?;

        let model_path = out.join("model.csocnn");
        save_model(&model_path, &network, &names, config.scaler_fingerprint.as_deref())?;
        manifest.add_artifact(&model_path)?;
        manifest.add_artifact_dir(&checkpoints)?;
        write_history(&out, &state, manifest)?;
        let parts = Partitions { train: Some(&p.train), val: Some(&p.val), test: &p.test };
        let record = write_evaluation(&out, &network, &names, &parts, manifest)?;
        manifest.set_metrics(json!({
            "table": record.table,
            "test_loss": record.test_loss,
            "best_epoch": state.best_epoch,
            "best_val_accuracy": state.best_val_acc,
            "best_val_loss": state.best_val_loss,
            "epochs_run": state.history.len(),
            "stopped_early": state.stopped_early,
            "lr_reductions": state.lr_reductions,
            "params": network.count_params(),
            "load": p.loaded.load,
            "cleaning": p.cleaning,
            "class_names": names,
        }));
        Ok(())
    })
}

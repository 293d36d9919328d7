use serde_json::json;

use csocnn_core::data::{LabelCodec, ScalerStats};

use super::{load_data, load_model_and_scaler, scaled_dataset, sibling_seed, split_records, with_manifest};
use crate::args::EvaluateArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::Seeds;
use crate::report::{write_evaluation, Partitions};

pub fn run(args: EvaluateArgs) -> CliResult<()> {
    // re-creating the training split needs the training run's seed
    let seed = match args.out.seed {
        Some(s) => Some(s),
        None if args.whole => None,
        None => Some(sibling_seed(&args.model).ok_or_else(|| {
            CliError::Usage("--seed is required to re-create the split (or pass --whole)".into())
        })?),
    };
    let seeds = Seeds::new(seed);
    let out = args.out.out.clone();
    with_manifest("evaluate", &out, &args, Some(seeds), |manifest| {
        let (model, scaler) = load_model_and_scaler(&args.model, args.scaler.as_deref(), manifest)?;
        let codec = LabelCodec::new(model.class_names.clone())?;
        let names = codec.names().to_vec();
        let d = model.network.input_shape().iter().product();
        let loaded = load_data(&args.data, &seeds, manifest, Some(codec.clone()), Some(d))?;

        let record = if args.whole {
            let test = scaled_dataset(&loaded.records, &scaler, &codec)?;
            let parts = Partitions { train: None, val: None, test: &test };
            write_evaluation(&out, &model.network, &names, &parts, manifest)?
        } else {
            let split = split_records(&loaded.records, seeds.split)?;
            if ScalerStats::fit(&split.train)?.fingerprint() != scaler.fingerprint() {
                log::warn!("the re-created training split does not match the scaler; check --seed and --data");
            }
            let train = scaled_dataset(&split.train, &scaler, &codec)?;
            let val = scaled_dataset(&split.val, &scaler, &codec)?;
            let test = scaled_dataset(&split.test, &scaler, &codec)?;
            let parts = Partitions { train: Some(&train), val: Some(&val), test: &test };
            write_evaluation(&out, &model.network, &names, &parts, manifest)?
        };
        manifest.set_metrics(json!({
            "table": record.table,
            "test_loss": record.test_loss,
            "test_samples": record.test_samples,
            "load": loaded.load,
            "class_names": names,
        }));
        Ok(())
    })
}

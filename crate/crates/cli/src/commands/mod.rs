use std::fs;
use std::path::{Path, PathBuf};

use csocnn_core::data::{
    clean_and_scale, default_feature_names, load_csv, make_synthetic_blobs, split, synthetic_class_names,
    to_network_input, write_csv, CleaningReport, CsvSchema, Dataset, FlowRecord, LabelCodec, LoadReport,
    ScalerStats, SplitSpec, FEATURE_COUNT,
};
use csocnn_core::nn::{load_model, SavedModel};

use crate::args::{Command, DataArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_file_name, ManifestHandle, RunManifest, RunStatus, Seeds};
use crate::report::write_file;

pub mod detect;
pub mod evaluate;
pub mod optimize;
pub mod train;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Train(a) => train::run(a),
        Command::Optimize(a) => optimize::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Detect(a) => detect::run(a),
    }
}

/// Runs `body` between a `running` manifest and its final status.
pub fn with_manifest<A: serde::Serialize>(
    command: &str,
    out: &Path,
    args: &A,
    seeds: Option<Seeds>,
    body: impl FnOnce(&ManifestHandle) -> CliResult<()>,
) -> CliResult<()> {
    let config = serde_json::to_value(args).map_err(|e| CliError::Core(e.into()))?;
    let manifest = ManifestHandle::start(command, out, config, seeds)?;
    match body(&manifest) {
        Ok(()) => manifest.finish(RunStatus::Complete, None),
        Err(e) => {
            if let Err(m) = manifest.finish(RunStatus::Failed, Some(e.record())) {
                log::error!("could not finalise manifest: {m}");
            }
            Err(e)
        }
    }
}

pub fn benign_index(names: &[String]) -> usize {
    names.iter().position(|n| n.eq_ignore_ascii_case("benign")).unwrap_or(0)
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

pub struct Loaded {
    pub records: Vec<FlowRecord>,
    pub feature_names: Vec<String>,
    pub codec: LabelCodec,
    pub load: Option<LoadReport>,
}

/// Reads `--data` or generates `--synthetic` records. A given codec fixes
/// the class set; `features` fixes the column count.
pub fn load_data(
    args: &DataArgs,
    seeds: &Seeds,
    manifest: &ManifestHandle,
    codec: Option<LabelCodec>,
    features: Option<usize>,
) -> CliResult<Loaded> {
    if let Some(path) = &args.data {
        require_file(path, "data file")?;
        let schema = CsvSchema {
            label_column: args.label_column.clone(),
            expected_features: if args.any_width { features } else { Some(features.unwrap_or(FEATURE_COUNT)) },
            ..CsvSchema::default()
        };
        let (records, report) = load_csv(path, &schema)?;
        manifest.add_input(path)?;
        log::info!("loaded {} records from {} ({report:?})", records.len(), path.display());
        let feature_names = feature_names_of(path, &schema)?;
        let codec = match codec {
            Some(c) => c,
            None => LabelCodec::from_records(&records)?,
        };
        return Ok(Loaded { records, feature_names, codec, load: Some(report) });
    }
    let k = codec.as_ref().map_or(args.classes, LabelCodec::len);
    let d = features.unwrap_or(FEATURE_COUNT);
    let records = make_synthetic_blobs(args.samples, k, d, args.separation, seeds.data)?;
    let codec = match codec {
        Some(c) => c,
        None => LabelCodec::new(synthetic_class_names(k))?,
    };
    Ok(Loaded { records, feature_names: default_feature_names(d), codec, load: None })
}

fn feature_names_of(path: &Path, schema: &CsvSchema) -> CliResult<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let rdr = csocnn_core::data::FlowCsvReader::new(f, schema)?;
    Ok(rdr.feature_names().to_vec())
}

pub struct Split {
    pub train: Vec<FlowRecord>,
    pub val: Vec<FlowRecord>,
    pub test: Vec<FlowRecord>,
}

pub fn split_records(records: &[FlowRecord], seed: u64) -> CliResult<Split> {
    let spec = SplitSpec { seed, ..SplitSpec::default() };
    let (train, val, test) = split(records, &spec)?;
    log::info!("split: train {} val {} test {}", train.len(), val.len(), test.len());
    Ok(Split { train, val, test })
}

pub fn scaled_dataset(records: &[FlowRecord], scaler: &ScalerStats, codec: &LabelCodec) -> CliResult<Dataset> {
    let (scaled, _) = scaler.transform(records)?;
    Ok(to_network_input(&scaled, codec)?)
}

/// Everything a training command needs after splitting and scaling.
pub struct Prepared {
    pub loaded: Loaded,
    pub scaler: ScalerStats,
    pub cleaning: CleaningReport,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Loads, splits and scales the data, then writes scaler.json and the raw
/// validation and test partitions.
pub fn prepare(args: &DataArgs, seeds: &Seeds, manifest: &ManifestHandle, out: &Path) -> CliResult<Prepared> {
    let loaded = load_data(args, seeds, manifest, None, None)?;
    let parts = split_records(&loaded.records, seeds.split)?;
    let (scaled_train, scaler, mut cleaning) = clean_and_scale(&parts.train)?;
    let scaler_path = out.join("scaler.json");
    write_file(&scaler_path, scaler.to_json()?.as_bytes(), manifest)?;
    for (name, recs) in [("val_split.csv", &parts.val), ("test_split.csv", &parts.test)] {
        let mut buf = Vec::new();
        write_csv(&mut buf, recs, &loaded.feature_names, &args.label_column)?;
        write_file(&out.join(name), &buf, manifest)?;
    }
    let train = to_network_input(&scaled_train, &loaded.codec)?;
    let (val, test) = {
        let (v, rv) = scaler.transform(&parts.val)?;
        let (t, rt) = scaler.transform(&parts.test)?;
        cleaning.merge(&rv);
        cleaning.merge(&rt);
        (to_network_input(&v, &loaded.codec)?, to_network_input(&t, &loaded.codec)?)
    };
    Ok(Prepared { loaded, scaler, cleaning, train, val, test })
}

/// Empties the checkpoint directory so the inventory only lists this run.
pub fn fresh_dir(dir: &Path) -> CliResult<PathBuf> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    Ok(dir.to_path_buf())
}

pub fn model_dir(model: &Path) -> PathBuf {
    model.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads the model and its scaler (default: scaler.json beside the model)
/// and checks that they belong together.
pub fn load_model_and_scaler(
    model_path: &Path,
    scaler_path: Option<&Path>,
    manifest: &ManifestHandle,
) -> CliResult<(SavedModel, ScalerStats)> {
    require_file(model_path, "model file")?;
    let model = load_model(model_path)?;
    manifest.add_input(model_path)?;
    let scaler_path = scaler_path.map(Path::to_path_buf).unwrap_or_else(|| model_dir(model_path).join("scaler.json"));
    require_file(&scaler_path, "scaler file")?;
    let scaler = ScalerStats::load(&scaler_path)?;
    manifest.add_input(&scaler_path)?;
    if let Some(expected) = &model.scaler_fingerprint {
        let found = scaler.fingerprint();
        if *expected != found {
            return Err(csocnn_core::Error::ScalerMismatch { expected: expected.clone(), found }.into());
        }
    }
    Ok((model, scaler))
}

/// Global seed recorded by the run that wrote the model, if any.
pub fn sibling_seed(model: &Path) -> Option<u64> {
    let dir = model_dir(model);
    ["train", "optimize"].iter().find_map(|cmd| {
        let text = fs::read_to_string(dir.join(manifest_file_name(cmd))).ok()?;
        let m: RunManifest = serde_json::from_str(&text).ok()?;
        m.seeds.map(|s| s.global)
    })
}

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};

use serde_json::json;

use csocnn_core::data::{load_csv, CsvSchema, Dataset, FlowCsvReader, FlowRecord, LabelCodec};
use csocnn_core::detector::{calibrate_threshold, CalibrationTarget, DetectionPolicy, Detector, ScoreKind, Verdict};
use csocnn_core::Error as CoreError;

use super::{benign_index, load_model_and_scaler, model_dir, require_file, with_manifest};
use crate::args::DetectArgs;
use crate::error::{CliError, CliResult};

const CHUNK: usize = 256;

fn broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}

/// Writes verdict rows; returns false once the reader has gone away.
fn write_chunk<W: Write>(
    out: &mut csv::Writer<W>,
    detector: &Detector,
    chunk: &[FlowRecord],
    first_index: usize,
    names: &[String],
    anomalous: &mut usize,
) -> CliResult<bool> {
    for (i, d) in detector.score_batch(chunk)?.into_iter().enumerate() {
        if d.verdict == Verdict::Anomalous {
            *anomalous += 1;
        }
        let mut row = vec![
            (first_index + i).to_string(),
            d.score.to_string(),
            d.verdict.to_string(),
            names[d.predicted_class].clone(),
        ];
        row.extend(d.probabilities.iter().map(|p| p.to_string()));
        match out.write_record(&row) {
            Err(e) if broken_pipe(&e) => return Ok(false),
            r => r.map_err(CoreError::from)?,
        }
    }
    match out.flush() {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(false),
        r => r.map(|_| true).map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn run(args: DetectArgs) -> CliResult<()> {
    let score_kind: ScoreKind = args.score_kind.parse().map_err(|e: CoreError| CliError::Usage(e.to_string()))?;
    let target = args
        .calibrate
        .as_deref()
        .map(str::parse::<CalibrationTarget>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = &args.data {
        require_file(p, "data file")?;
    }
    let out = args.out.clone();
    with_manifest("detect", &out, &args, None, |manifest| {
        let (model, scaler) = load_model_and_scaler(&args.model, args.scaler.as_deref(), manifest)?;
        let names = model.class_names.clone();
        let d: usize = model.network.input_shape().iter().product();
        let policy = DetectionPolicy {
            threshold: args.threshold,
            score_kind,
            benign_class_index: benign_index(&names),
        };
        let mut detector = Detector::new(model, scaler, policy)?;

        if let Some(target) = target {
            let path = args.calibration_data.clone().unwrap_or_else(|| model_dir(&args.model).join("val_split.csv"));
            require_file(&path, "calibration data")?;
            let schema = CsvSchema {
                label_column: args.label_column.clone(),
                expected_features: Some(d),
                ..CsvSchema::default()
            };
            let (records, _) = load_csv(&path, &schema)?;
            manifest.add_input(&path)?;
            let codec = LabelCodec::new(names.clone())?;
            let labels = records.iter().map(|r| codec.encode(&r.label)).collect::<Result<Vec<_>, _>>()?;
            let validation = Dataset::new(detector.prepare(&records)?, labels)?;
            let t = calibrate_threshold(detector.model(), &validation, detector.policy(), target)?;
            detector.set_threshold(t)?;
            eprintln!("calibrated threshold: {t}");
        }

        let input: Box<dyn Read> = match &args.data {
            Some(p) => {
                manifest.add_input(p)?;
                Box::new(File::open(p).map_err(|e| CliError::io(p.display(), e))?)
            }
            None => Box::new(io::stdin().lock()),
        };
        let schema = CsvSchema {
            label_column: args.label_column.clone(),
            expected_features: Some(d),
            require_label: false,
            ..CsvSchema::default()
        };
        let reader = FlowCsvReader::new(input, &schema)?;
        let mut out_csv = csv::Writer::from_writer(BufWriter::new(io::stdout().lock()));
        let mut header = vec!["index".to_string(), "score".into(), "verdict".into(), "predicted_class".into()];
        header.extend(names.iter().map(|n| format!("p_{n}")));
        out_csv.write_record(&header).map_err(CoreError::from)?;

        let (mut total, mut anomalous) = (0usize, 0usize);
        let mut chunk = Vec::with_capacity(CHUNK);
        for rec in reader {
            chunk.push(rec?);
            if chunk.len() == CHUNK {
                if !write_chunk(&mut out_csv, &detector, &chunk, total, &names, &mut anomalous)? {
                    log::info!("output closed after {total} records");
                    return Ok(());
                }
                total += chunk.len();
                chunk.clear();
            }
        }
        if write_chunk(&mut out_csv, &detector, &chunk, total, &names, &mut anomalous)? {
            total += chunk.len();
        }

        manifest.set_metrics(json!({
            "threshold": detector.policy().threshold,
            "score_kind": detector.policy().score_kind,
            "benign_class": names[detector.policy().benign_class_index],
            "records": total,
            "anomalous": anomalous,
            "normal": total - anomalous,
        }));
        Ok(())
    })
}

//! Evaluation and training-curve artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use csocnn_core::data::Dataset;
use csocnn_core::metrics::{
    class_report, confusion_named, roc_curve, roc_micro, scalar_metrics, write_roc_csv, Averaged, ClassMetrics,
    MetricSet, RocCurve, UndefinedPolicy,
};
use csocnn_core::nn::Network;
use csocnn_core::trainer::{evaluate, Evaluation, TrainingState};
use csocnn_core::Error as CoreError;

use crate::error::{CliError, CliResult};
use crate::manifest::ManifestHandle;
use crate::plot::{heatmap, line_chart, Series};

/// Scalar record with the published field names. Precision, recall, F1,
/// sensitivity, specificity, PPV and NPV are support-weighted averages over
/// the test split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarTable {
    #[serde(rename = "Training accuracy")]
    pub training_accuracy: Option<f64>,
    #[serde(rename = "Validating accuracy")]
    pub validating_accuracy: Option<f64>,
    #[serde(rename = "Testing accuracy")]
    pub testing_accuracy: f64,
    #[serde(rename = "Precision Score")]
    pub precision: Option<f64>,
    #[serde(rename = "Recall Score")]
    pub recall: Option<f64>,
    #[serde(rename = "F1 Score")]
    pub f1: Option<f64>,
    #[serde(rename = "Sensitivity")]
    pub sensitivity: Option<f64>,
    #[serde(rename = "Specificity")]
    pub specificity: Option<f64>,
    #[serde(rename = "PPV")]
    pub ppv: Option<f64>,
    #[serde(rename = "NPV")]
    pub npv: Option<f64>,
    #[serde(rename = "Kappa Score")]
    pub kappa: Option<f64>,
}

pub const TABLE_FIELDS: [&str; 11] = [
    "Training accuracy",
    "Validating accuracy",
    "Testing accuracy",
    "Precision Score",
    "Recall Score",
    "F1 Score",
    "Sensitivity",
    "Specificity",
    "PPV",
    "NPV",
    "Kappa Score",
];

#[derive(Clone, Debug, Serialize)]
pub struct NamedClass {
    pub class: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedAuc {
    pub curve: String,
    pub auc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsRecord {
    pub table: ScalarTable,
    /// Averaging used for the table's per-class aggregates.
    pub table_averaging: &'static str,
    pub test_samples: u64,
    pub test_loss: f64,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub observed_agreement: f64,
    pub chance_agreement: f64,
    pub macro_avg: Averaged,
    pub weighted_avg: Averaged,
    pub micro_avg: Averaged,
    pub per_class: Vec<NamedClass>,
    pub auc: Vec<NamedAuc>,
}

pub fn write_file(path: &Path, contents: &[u8], manifest: &ManifestHandle) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))?;
    manifest.add_artifact(path)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csocnn_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// history.csv plus accuracy and loss curves.
pub fn write_history(out: &Path, state: &TrainingState, manifest: &ManifestHandle) -> CliResult<()> {
    let bytes = csv_bytes(|b| state.write_history_csv(b))?;
    write_file(&out.join("history.csv"), &bytes, manifest)?;
    let series = |name: &str, f: fn(&csocnn_core::trainer::EpochRecord) -> f64| Series {
        name: name.to_string(),
        points: state.history.iter().map(|r| (r.epoch as f64, f(r))).collect(),
    };
    let acc = line_chart(
        "Accuracy per epoch",
        "epoch",
        "accuracy",
        &[series("train_acc", |r| r.train_acc), series("val_acc", |r| r.val_acc)],
        None,
        None,
    );
    write_file(&out.join("accuracy.svg"), acc.as_bytes(), manifest)?;
    let loss = line_chart(
        "Loss per epoch",
        "epoch",
        "loss",
        &[series("train_loss", |r| r.train_loss), series("val_loss", |r| r.val_loss)],
        None,
        None,
    );
    write_file(&out.join("loss.svg"), loss.as_bytes(), manifest)
}

pub struct Partitions<'a> {
    pub train: Option<&'a Dataset>,
    pub val: Option<&'a Dataset>,
    pub test: &'a Dataset,
}

fn probabilities_csv(eval: &Evaluation, labels: &[usize], names: &[String]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "true_label".to_string(), "predicted".to_string()];
    header.extend(names.iter().map(|n| format!("p_{n}")));
    w.write_record(&header).map_err(CoreError::from)?;
    for (i, (p, &l)) in eval.probabilities.iter().zip(labels).enumerate() {
        let mut row = vec![i.to_string(), names[l].clone(), names[eval.predictions[i]].clone()];
        row.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(CoreError::from)?;
    }
    w.into_inner().map_err(|e| CliError::io("<probabilities csv>", e.into_error()))
}

/// One-vs-rest curve per class that has both positives and negatives,
/// followed by the micro average.
pub fn roc_curves(labels: &[usize], eval: &Evaluation, names: &[String]) -> CliResult<Vec<(String, RocCurve)>> {
    let mut curves = Vec::new();
    for (c, name) in names.iter().enumerate() {
        match roc_curve(labels, &eval.probabilities, c) {
            Ok(r) => curves.push((name.clone(), r)),
            Err(CoreError::DegenerateClass(m)) => log::warn!("no ROC curve for {name}: {m}"),
            Err(e) => return Err(e.into()),
        }
    }
    match roc_micro(labels, &eval.probabilities) {
        Ok(r) => curves.push(("micro".to_string(), r)),
        Err(CoreError::DegenerateClass(m)) => log::warn!("no micro ROC curve: {m}"),
        Err(e) => return Err(e.into()),
    }
    Ok(curves)
}

/// Evaluates the network and writes report.txt, confusion.csv/svg,
/// roc.csv/svg, probabilities.csv and metrics.json.
pub fn write_evaluation(
    out: &Path,
    network: &Network<f32>,
    names: &[String],
    parts: &Partitions<'_>,
    manifest: &ManifestHandle,
) -> CliResult<MetricsRecord> {
    let train = parts.train.map(|d| evaluate(network, d)).transpose()?;
    let val = parts.val.map(|d| evaluate(network, d)).transpose()?;
    let test = evaluate(network, parts.test)?;
    let labels = &parts.test.labels;

    let cm = confusion_named(labels, &test.predictions, names.to_vec())?;
    let set: MetricSet = scalar_metrics(&cm, UndefinedPolicy::Strict)?;
    let report = class_report(&cm, UndefinedPolicy::Strict)?;

    let w = &set.weighted_avg;
    let table = ScalarTable {
        training_accuracy: train.as_ref().map(|e| e.accuracy),
        validating_accuracy: val.as_ref().map(|e| e.accuracy),
        testing_accuracy: set.accuracy,
        precision: w.precision,
        recall: w.recall,
        f1: w.f1,
        sensitivity: w.sensitivity(),
        specificity: w.specificity,
        ppv: w.ppv(),
        npv: w.npv,
        kappa: set.kappa,
    };

    let curves = roc_curves(labels, &test, names)?;
    let refs: Vec<(String, &RocCurve)> = curves.iter().map(|(n, c)| (n.clone(), c)).collect();
    write_file(&out.join("roc.csv"), &csv_bytes(|b| write_roc_csv(b, &refs))?, manifest)?;
    let series: Vec<Series> = curves
        .iter()
        .map(|(n, c)| Series { name: n.clone(), points: c.points.iter().map(|p| (p.fpr, p.tpr)).collect() })
        .collect();
    let roc_svg = line_chart("ROC (one-vs-rest)", "false positive rate", "true positive rate", &series, Some((0.0, 1.0)), Some((0.0, 1.0)));
    write_file(&out.join("roc.svg"), roc_svg.as_bytes(), manifest)?;

    write_file(&out.join("confusion.csv"), &csv_bytes(|b| cm.write_csv(b))?, manifest)?;
    write_file(&out.join("confusion.svg"), heatmap("Confusion matrix", names, &cm.rows()).as_bytes(), manifest)?;
    write_file(&out.join("probabilities.csv"), &probabilities_csv(&test, labels, names)?, manifest)?;

    let record = MetricsRecord {
        table,
        table_averaging: "weighted",
        test_samples: set.total,
        test_loss: test.loss,
        train_loss: train.as_ref().map(|e| e.loss),
        val_loss: val.as_ref().map(|e| e.loss),
        observed_agreement: set.p_o,
        chance_agreement: set.p_e,
        macro_avg: set.macro_avg.clone(),
        weighted_avg: set.weighted_avg.clone(),
        micro_avg: set.micro_avg.clone(),
        per_class: names
            .iter()
            .zip(&set.per_class)
            .map(|(n, m)| NamedClass {
                class: n.clone(),
                sensitivity: m.sensitivity(),
                ppv: m.ppv(),
                metrics: m.clone(),
            })
            .collect(),
        auc: curves.iter().map(|(n, c)| NamedAuc { curve: n.clone(), auc: c.auc }).collect(),
    };

    let mut text = format!("{report}\n");
    for (field, value) in TABLE_FIELDS.iter().zip(table_values(&record.table)) {
        text.push_str(&format!("{field:<20} {}\n", fmt_metric(value)));
    }
    write_file(&out.join("report.txt"), text.as_bytes(), manifest)?;
    let json = serde_json::to_vec_pretty(&record).map_err(CoreError::from)?;
    write_file(&out.join("metrics.json"), &json, manifest)?;
    Ok(record)
}

pub fn table_values(t: &ScalarTable) -> [Option<f64>; 11] {
    [
        t.training_accuracy,
        t.validating_accuracy,
        Some(t.testing_accuracy),
        t.precision,
        t.recall,
        t.f1,
        t.sensitivity,
        t.specificity,
        t.ppv,
        t.npv,
        t.kappa,
    ]
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_serialises_with_published_names_in_order() {
        let t = ScalarTable {
            training_accuracy: Some(0.99),
            validating_accuracy: None,
            testing_accuracy: 0.98,
            precision: Some(0.1),
            recall: Some(0.2),
            f1: Some(0.3),
            sensitivity: Some(0.2),
            specificity: Some(0.4),
            ppv: Some(0.1),
            npv: Some(0.5),
            kappa: None,
        };
        let s = serde_json::to_string(&t).unwrap();
        let mut last = 0;
        for f in TABLE_FIELDS {
            let at = s.find(&format!("\"{f}\"")).unwrap_or_else(|| panic!("missing {f}"));
            assert!(at >= last);
            last = at;
        }
        assert!(s.contains("\"Validating accuracy\":null"));
    }
}

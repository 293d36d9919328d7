//! Confusion-matrix metrics, classification reports and ROC curves.
//!
//! Ratios whose denominator is zero are `None` ("undefined") rather than 0.
//! [`UndefinedPolicy::CoerceZero`] turns them into 0 for report aggregation.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// K×K counts, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(grid: &[Vec<u64>], class_names: Vec<String>) -> Result<Self> {
        let k = grid.len();
        if k == 0 || grid.iter().any(|r| r.len() != k) || class_names.len() != k {
            return Err(Error::Shape(format!(
                "confusion grid must be square with one name per class (k={k}, names={})",
                class_names.len()
            )));
        }
        Ok(ConfusionMatrix {
            k,
            counts: grid.iter().flatten().copied().collect(),
            class_names,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Support of class `i` (number of samples whose true class is `i`).
    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.k {
            let mut row = vec![self.class_names[i].clone()];
            row.extend((0..self.k).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<confusion csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

pub fn default_class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    confusion_named(true_labels, predicted, default_class_names(k))
}

pub fn confusion_named(true_labels: &[usize], predicted: &[usize], class_names: Vec<String>) -> Result<ConfusionMatrix> {
    let k = class_names.len();
    if true_labels.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    if k == 0 {
        return Err(Error::Shape("need at least one class".into()));
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        for l in [t, p] {
            if l >= k {
                return Err(Error::Label { label: l, classes: k });
            }
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts, class_names })
}

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn basic_rates(cm: &ConfusionMatrix, class_index: usize) -> Rates {
    let tp = cm.get(class_index, class_index);
    let fp = cm.col_sum(class_index) - tp;
    let fn_ = cm.row_sum(class_index) - tp;
    let tn = cm.total() - tp - fp - fn_;
    Rates { tp, fp, tn, fn_ }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPolicy {
    #[default]
    Strict,
    CoerceZero,
}

/// `None` marks an undefined value.
pub type Metric = Option<f64>;

/// Unwraps a metric, failing with [`Error::UndefinedMetric`].
pub fn defined(value: Metric, name: &'static str) -> Result<f64> {
    value.ok_or(Error::UndefinedMetric(name))
}

pub fn ratio(num: u64, den: u64) -> Metric {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Harmonic mean of precision and recall.
pub fn f1_score(precision: Metric, recall: Metric) -> Metric {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    }
}

fn apply(policy: UndefinedPolicy, m: Metric) -> Metric {
    match policy {
        UndefinedPolicy::Strict => m,
        UndefinedPolicy::CoerceZero => Some(m.unwrap_or(0.0)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub specificity: Metric,
    pub npv: Metric,
    pub support: u64,
}

impl ClassMetrics {
    /// Same computation as recall.
    pub fn sensitivity(&self) -> Metric {
        self.recall
    }

    /// Same computation as precision.
    pub fn ppv(&self) -> Metric {
        self.precision
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub specificity: Metric,
    pub npv: Metric,
}

impl Averaged {
    pub fn sensitivity(&self) -> Metric {
        self.recall
    }

    pub fn ppv(&self) -> Metric {
        self.precision
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub total: u64,
    /// trace / total
    pub accuracy: f64,
    /// Observed agreement (identical to accuracy).
    pub p_o: f64,
    /// Chance agreement from the row and column marginals.
    pub p_e: f64,
    pub kappa: Metric,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averaged,
    pub weighted_avg: Averaged,
    pub micro_avg: Averaged,
}

fn macro_mean(values: &[Metric]) -> Metric {
    let mut sum = 0.0;
    for v in values {
        sum += (*v)?;
    }
    Some(sum / values.len() as f64)
}

fn weighted_mean(values: &[Metric], supports: &[u64], total: u64) -> Metric {
    let mut sum = 0.0;
    for (v, &s) in values.iter().zip(supports) {
        sum += (*v)? * s as f64;
    }
    Some(sum / total as f64)
}

pub fn scalar_metrics(cm: &ConfusionMatrix, policy: UndefinedPolicy) -> Result<MetricSet> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy"));
    }
    let k = cm.k();
    let rates: Vec<Rates> = (0..k).map(|c| basic_rates(cm, c)).collect();
    let per_class: Vec<ClassMetrics> = rates
        .iter()
        .map(|r| {
            let precision = ratio(r.tp, r.tp + r.fp);
            let recall = ratio(r.tp, r.tp + r.fn_);
            ClassMetrics {
                precision: apply(policy, precision),
                recall: apply(policy, recall),
                f1: apply(policy, f1_score(precision, recall)),
                specificity: apply(policy, ratio(r.tn, r.tn + r.fp)),
                npv: apply(policy, ratio(r.tn, r.tn + r.fn_)),
                support: r.tp + r.fn_,
            }
        })
        .collect();
    let supports: Vec<u64> = per_class.iter().map(|c| c.support).collect();

    let column = |f: fn(&ClassMetrics) -> Metric| -> Vec<Metric> { per_class.iter().map(f).collect() };
    let cols = [
        column(|c| c.precision),
        column(|c| c.recall),
        column(|c| c.f1),
        column(|c| c.specificity),
        column(|c| c.npv),
    ];
    let averaged = |agg: &dyn Fn(&[Metric]) -> Metric| Averaged {
        precision: apply(policy, agg(&cols[0])),
        recall: apply(policy, agg(&cols[1])),
        f1: apply(policy, agg(&cols[2])),
        specificity: apply(policy, agg(&cols[3])),
        npv: apply(policy, agg(&cols[4])),
    };
    let macro_avg = averaged(&macro_mean);
    let weighted_avg = averaged(&|v| weighted_mean(v, &supports, total));

    let (tp, fp, tn, fn_) = rates.iter().fold((0, 0, 0, 0), |a, r| (a.0 + r.tp, a.1 + r.fp, a.2 + r.tn, a.3 + r.fn_));
    let micro_p = ratio(tp, tp + fp);
    let micro_r = ratio(tp, tp + fn_);
    let micro_avg = Averaged {
        precision: apply(policy, micro_p),
        recall: apply(policy, micro_r),
        f1: apply(policy, f1_score(micro_p, micro_r)),
        specificity: apply(policy, ratio(tn, tn + fp)),
        npv: apply(policy, ratio(tn, tn + fn_)),
    };

    let accuracy = cm.trace() as f64 / total as f64;
    let p_o = accuracy;
    let n = total as f64;
    let p_e = (0..k)
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (n * n);
    let kappa = if p_e < 1.0 { Some((p_o - p_e) / (1.0 - p_e)) } else { None };

    Ok(MetricSet {
        total,
        accuracy,
        p_o,
        p_e,
        kappa: apply(policy, kappa),
        per_class,
        macro_avg,
        weighted_avg,
        micro_avg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ReportRow>,
    pub accuracy: f64,
    pub total: u64,
    pub macro_avg: ReportRow,
    pub weighted_avg: ReportRow,
}

pub fn class_report(cm: &ConfusionMatrix, policy: UndefinedPolicy) -> Result<ClassReport> {
    let m = scalar_metrics(cm, policy)?;
    let classes = m
        .per_class
        .iter()
        .zip(cm.class_names())
        .map(|(c, name)| ReportRow {
            name: name.clone(),
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            support: c.support,
        })
        .collect();
    let avg_row = |name: &str, a: &Averaged| ReportRow {
        name: name.to_string(),
        precision: a.precision,
        recall: a.recall,
        f1: a.f1,
        support: m.total,
    };
    Ok(ClassReport {
        classes,
        accuracy: m.accuracy,
        total: m.total,
        macro_avg: avg_row("macro avg", &m.macro_avg),
        weighted_avg: avg_row("weighted avg", &m.weighted_avg),
    })
}

fn cell(m: Metric) -> String {
    match m {
        Some(v) => format!("{v:.2}"),
        None => "undef".to_string(),
    }
}

impl fmt::Display for ClassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .classes
            .iter()
            .map(|r| r.name.len())
            .chain(["weighted avg".len()])
            .max()
            .unwrap_or(12);
        writeln!(f, "{:>width$} {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support")?;
        writeln!(f)?;
        for r in &self.classes {
            writeln!(
                f,
                "{:>width$} {:>9} {:>9} {:>9} {:>9}",
                r.name,
                cell(r.precision),
                cell(r.recall),
                cell(r.f1),
                r.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:>width$} {:>9} {:>9} {:>9} {:>9}", "accuracy", "", "", format!("{:.2}", self.accuracy), self.total)?;
        for r in [&self.macro_avg, &self.weighted_avg] {
            writeln!(
                f,
                "{:>width$} {:>9} {:>9} {:>9} {:>9}",
                r.name,
                cell(r.precision),
                cell(r.recall),
                cell(r.f1),
                r.support
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores >= threshold are predicted positive. The first point uses +inf.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC sweep over the distinct scores, highest first. Starts at (0,0) and
/// ends at (1,1); AUC by the trapezoidal rule.
pub fn roc_binary(is_positive: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if is_positive.len() != scores.len() {
        return Err(Error::Shape(format!("{} labels vs {} scores", is_positive.len(), scores.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Shape(format!("non-finite score {s}")));
    }
    let pos = is_positive.iter().filter(|&&p| p).count() as u64;
    let neg = is_positive.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateClass(format!("{pos} positives and {neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC for `class_index`, scoring each sample by its
/// probability for that class.
pub fn roc_curve(true_labels: &[usize], probabilities: &[Vec<f64>], class_index: usize) -> Result<RocCurve> {
    if true_labels.len() != probabilities.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} probability rows",
            true_labels.len(),
            probabilities.len()
        )));
    }
    let mut scores = Vec::with_capacity(probabilities.len());
    for row in probabilities {
        let p = row.get(class_index).ok_or(Error::Label { label: class_index, classes: row.len() })?;
        scores.push(*p);
    }
    let positive: Vec<bool> = true_labels.iter().map(|&l| l == class_index).collect();
    roc_binary(&positive, &scores).map_err(|e| match e {
        Error::DegenerateClass(m) => Error::DegenerateClass(format!("class {class_index}: {m}")),
        other => other,
    })
}

/// Micro-averaged ROC: every (sample, class) pair pooled into one binary task.
pub fn roc_micro(true_labels: &[usize], probabilities: &[Vec<f64>]) -> Result<RocCurve> {
    let mut scores = Vec::new();
    let mut positive = Vec::new();
    for (&l, row) in true_labels.iter().zip(probabilities) {
        for (c, &p) in row.iter().enumerate() {
            scores.push(p);
            positive.push(c == l);
        }
    }
    roc_binary(&positive, &scores)
}

/// Writes `curve,fpr,tpr,threshold` rows for several named curves.
pub fn write_roc_csv<W: Write>(out: W, curves: &[(String, &RocCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve", "fpr", "tpr", "threshold"])?;
    for (name, c) in curves {
        for p in &c.points {
            w.write_record([name.clone(), p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<roc csv>", e))?;
    Ok(())
}

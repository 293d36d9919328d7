//! Flow-feature CSV ingestion, cleaning and scaling, stratified splits, and
//! the (n, features, 1, 1) network layout.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_COUNT: usize = 75;

/// Stage labels of the five-class APT task, in code order.
pub const DAPT_CLASSES: [&str; 5] = ["Benign", "Data", "Establish", "Lateral", "Reconn"];

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    pub features: Vec<f32>,
    pub label: String,
}

/// Bijection between class names and codes `0..K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCodec {
    names: Vec<String>,
}

impl LabelCodec {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("label codec needs at least one class".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::Config(format!("duplicate class name {n:?}")));
            }
        }
        Ok(LabelCodec { names })
    }

    pub fn dapt() -> Self {
        LabelCodec {
            names: DAPT_CLASSES.map(String::from).to_vec(),
        }
    }

    /// Sorted distinct labels of `records`.
    pub fn from_records(records: &[FlowRecord]) -> Result<Self> {
        let mut names: Vec<String> = records.iter().map(|r| r.label.clone()).collect();
        names.sort();
        names.dedup();
        Self::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn encode(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("unknown label {name:?}; known: {:?}", self.names)))
    }

    pub fn decode(&self, code: usize) -> Result<&str> {
        self.names
            .get(code)
            .map(String::as_str)
            .ok_or(Error::Label { label: code, classes: self.names.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    /// Exact feature column set; `None` takes every non-label column.
    pub feature_columns: Option<Vec<String>>,
    /// Required number of feature columns when `feature_columns` is `None`.
    pub expected_features: Option<usize>,
    /// When false a missing label column is accepted and labels are empty.
    pub require_label: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_column: "Label".into(),
            feature_columns: None,
            expected_features: Some(FEATURE_COUNT),
            require_label: true,
        }
    }
}

impl CsvSchema {
    /// Every non-label column is a feature, whatever their number.
    pub fn any_width(label_column: &str) -> Self {
        CsvSchema {
            label_column: label_column.into(),
            expected_features: None,
            ..CsvSchema::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    /// Cells that failed to parse and were stored as NaN for the cleaning policy.
    pub unparseable: usize,
    /// Cells that parsed to NaN or ±Inf.
    pub non_finite: usize,
}

/// Streaming reader validating the header once, then yielding records.
pub struct FlowCsvReader<R: Read> {
    rows: csv::StringRecordsIntoIter<R>,
    feature_idx: Vec<usize>,
    feature_names: Vec<String>,
    label_idx: Option<usize>,
    width: usize,
    row: usize,
    report: LoadReport,
}

impl<R: Read> FlowCsvReader<R> {
    pub fn new(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let label_idx = header.iter().position(|h| *h == schema.label_column);
        if label_idx.is_none() && schema.require_label {
            return Err(Error::Schema(format!("missing label column {:?}", schema.label_column)));
        }
        let feature_idx: Vec<usize> = match &schema.feature_columns {
            Some(cols) => {
                let missing: Vec<&String> = cols.iter().filter(|c| !header.contains(c)).collect();
                let extra: Vec<&String> = header
                    .iter()
                    .filter(|h| **h != schema.label_column && !cols.contains(h))
                    .collect();
                if !missing.is_empty() || !extra.is_empty() {
                    return Err(Error::Schema(format!("missing columns {missing:?}, extra columns {extra:?}")));
                }
                cols.iter()
                    .map(|c| header.iter().position(|h| h == c).expect("checked"))
                    .collect()
            }
            None => (0..header.len()).filter(|&i| Some(i) != label_idx).collect(),
        };
        if let Some(n) = schema.expected_features {
            if feature_idx.len() != n {
                return Err(Error::Schema(format!(
                    "expected {n} feature columns, found {}",
                    feature_idx.len()
                )));
            }
        }
        let feature_names = feature_idx.iter().map(|&i| header[i].clone()).collect();
        Ok(FlowCsvReader {
            width: header.len(),
            rows: rdr.into_records(),
            feature_idx,
            feature_names,
            label_idx,
            row: 1,
            report: LoadReport::default(),
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }
}

impl<R: Read> Iterator for FlowCsvReader<R> {
    type Item = Result<FlowRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.rows.next()?;
        self.row += 1;
        let row = self.row;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => return Some(Err(Error::Parse { row, message: e.to_string() })),
        };
        if rec.len() != self.width {
            return Some(Err(Error::Parse {
                row,
                message: format!("{} fields, header has {}", rec.len(), self.width),
            }));
        }
        let mut features = Vec::with_capacity(self.feature_idx.len());
        for &i in &self.feature_idx {
            let v = match rec[i].trim().parse::<f32>() {
                Ok(v) => {
                    if !v.is_finite() {
                        self.report.non_finite += 1;
                    }
                    v
                }
                Err(_) => {
                    self.report.unparseable += 1;
                    f32::NAN
                }
            };
            features.push(v);
        }
        let label = self.label_idx.map(|i| rec[i].trim().to_string()).unwrap_or_default();
        self.report.rows += 1;
        Some(Ok(FlowRecord { features, label }))
    }
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<(Vec<FlowRecord>, LoadReport)> {
    let mut rdr = FlowCsvReader::new(reader, schema)?;
    let records = rdr.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((records, rdr.report))
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(Vec<FlowRecord>, LoadReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(f, schema)
}

/// Writes records with the given feature column names and a trailing label column.
pub fn write_csv<W: Write>(out: W, records: &[FlowRecord], feature_names: &[String], label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = feature_names.to_vec();
    header.push(label_column.to_string());
    w.write_record(&header)?;
    for r in records {
        if r.features.len() != feature_names.len() {
            return Err(Error::Shape(format!(
                "record has {} features, header {}",
                r.features.len(),
                feature_names.len()
            )));
        }
        let mut row: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        row.push(r.label.clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

/// Replacement counts from cleaning.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub nan_replaced: usize,
    pub pos_inf_replaced: usize,
    pub neg_inf_replaced: usize,
    /// Scaled values outside [0, 1] pulled back to the interval.
    pub clamped: usize,
}

impl CleaningReport {
    pub fn merge(&mut self, other: &CleaningReport) {
        self.nan_replaced += other.nan_replaced;
        self.pos_inf_replaced += other.pos_inf_replaced;
        self.neg_inf_replaced += other.neg_inf_replaced;
        self.clamped += other.clamped;
    }
}

pub const SCALER_VERSION: u32 = 1;

/// Per-column statistics fitted on the training partition only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub version: u32,
    /// Median of the finite values.
    pub median: Vec<f64>,
    /// Smallest finite value.
    pub min: Vec<f64>,
    /// Largest finite value.
    pub max: Vec<f64>,
}

fn median_of(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

impl ScalerStats {
    pub fn fit(records: &[FlowRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Config("cannot fit scaler on an empty training partition".into()))?;
        let d = first.features.len();
        let mut median = Vec::with_capacity(d);
        let mut min = Vec::with_capacity(d);
        let mut max = Vec::with_capacity(d);
        let mut column = Vec::with_capacity(records.len());
        for j in 0..d {
            column.clear();
            for r in records {
                if r.features.len() != d {
                    return Err(Error::Shape(format!("ragged feature vectors ({} vs {d})", r.features.len())));
                }
                let v = r.features[j] as f64;
                if v.is_finite() {
                    column.push(v);
                }
            }
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let m = median_of(&mut column);
            if column.is_empty() {
                min.push(0.0);
                max.push(0.0);
            } else {
                min.push(lo);
                max.push(hi);
            }
            median.push(m);
        }
        Ok(ScalerStats { version: SCALER_VERSION, median, min, max })
    }

    pub fn dims(&self) -> usize {
        self.median.len()
    }

    /// Imputes non-finite values, min-max scales and clamps to [0, 1] in place.
    pub fn transform_row(&self, features: &mut [f32], report: &mut CleaningReport) -> Result<()> {
        if features.len() != self.dims() {
            return Err(Error::Shape(format!(
                "record has {} features, scaler fitted on {}",
                features.len(),
                self.dims()
            )));
        }
        for (j, f) in features.iter_mut().enumerate() {
            let mut v = *f as f64;
            if v.is_nan() {
                v = self.median[j];
                report.nan_replaced += 1;
            } else if v == f64::INFINITY {
                v = self.max[j];
                report.pos_inf_replaced += 1;
            } else if v == f64::NEG_INFINITY {
                v = self.min[j];
                report.neg_inf_replaced += 1;
            }
            let span = self.max[j] - self.min[j];
            let mut s = if span > 0.0 { (v - self.min[j]) / span } else { 0.0 };
            if !(0.0..=1.0).contains(&s) {
                s = s.clamp(0.0, 1.0);
                report.clamped += 1;
            }
            *f = s as f32;
        }
        Ok(())
    }

    pub fn transform(&self, records: &[FlowRecord]) -> Result<(Vec<FlowRecord>, CleaningReport)> {
        let mut report = CleaningReport::default();
        let mut out = records.to_vec();
        for r in &mut out {
            self.transform_row(&mut r.features, &mut report)?;
        }
        Ok((out, report))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the compact JSON encoding; stored in model manifests.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain numeric struct");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fits on `train` and returns the cleaned, scaled training records.
pub fn clean_and_scale(train: &[FlowRecord]) -> Result<(Vec<FlowRecord>, ScalerStats, CleaningReport)> {
    let stats = ScalerStats::fit(train)?;
    let (records, report) = stats.transform(train)?;
    Ok((records, stats, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_remainder: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.20,
            val_fraction_of_remainder: 0.10,
            stratified: true,
            seed: 0,
        }
    }
}

// absorbs representation error in products like 10 * 0.7
const FLOOR_SLACK: f64 = 1e-9;

fn floor_frac(n: usize, frac: f64) -> usize {
    ((n as f64 * frac + FLOOR_SLACK).floor() as usize).min(n)
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("val_fraction_of_remainder", self.val_fraction_of_remainder),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }

    /// (train, val, test) sizes for `n` records. The remainder kept for
    /// training and validation is floored, test takes the rest; training is
    /// the floored share of the remainder and validation the complement.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let remainder = floor_frac(n, 1.0 - self.test_fraction);
        let train = floor_frac(remainder, 1.0 - self.val_fraction_of_remainder);
        (train, remainder - train, n - remainder)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `total` items over groups proportionally to `counts` by largest
/// remainder; ties go to the lower group index.
fn apportion(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let ideal: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut quota: Vec<usize> = ideal.iter().zip(counts).map(|(x, &c)| (x.floor() as usize).min(c)).collect();
    let mut left = total - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while left > 0 {
        let before = left;
        for &g in &order {
            if left > 0 && quota[g] < counts[g] {
                quota[g] += 1;
                left -= 1;
            }
        }
        if before == left {
            break;
        }
    }
    quota
}

/// Partitions `0..labels.len()`. Each partition is returned in ascending order.
pub fn split_indices(labels: &[usize], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = labels.len();
    let (_, n_val, n_test) = spec.sizes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0x5b1]));
    let mut out = SplitIndices { train: vec![], val: vec![], test: vec![] };
    if spec.stratified {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        if let Some((c, g)) = groups.iter().find(|(_, g)| g.len() < 3) {
            return Err(Error::Stratify(format!(
                "class {c} has {} record(s); stratified splitting needs at least 3",
                g.len()
            )));
        }
        let counts: Vec<usize> = groups.values().map(Vec::len).collect();
        let test_q = apportion(&counts, n_test);
        let rest: Vec<usize> = counts.iter().zip(&test_q).map(|(c, t)| c - t).collect();
        let val_q = apportion(&rest, n_val);
        for (gi, mut idx) in groups.into_values().enumerate() {
            idx.shuffle(&mut rng);
            out.test.extend_from_slice(&idx[..test_q[gi]]);
            out.val.extend_from_slice(&idx[test_q[gi]..test_q[gi] + val_q[gi]]);
            out.train.extend_from_slice(&idx[test_q[gi] + val_q[gi]..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        out.test = idx[..n_test].to_vec();
        out.val = idx[n_test..n_test + n_val].to_vec();
        out.train = idx[n_test + n_val..].to_vec();
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Splits records into (train, val, test) by their labels.
pub fn split(records: &[FlowRecord], spec: &SplitSpec) -> Result<(Vec<FlowRecord>, Vec<FlowRecord>, Vec<FlowRecord>)> {
    let mut codes = HashMap::new();
    let labels: Vec<usize> = records
        .iter()
        .map(|r| {
            let next = codes.len();
            *codes.entry(r.label.as_str()).or_insert(next)
        })
        .collect();
    let idx = split_indices(&labels, spec)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&idx.train), pick(&idx.val), pick(&idx.test)))
}

/// Network-ready inputs of shape (n, features, 1, 1) with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Tensor<f32>, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!("{} inputs vs {} labels", inputs.rows(), labels.len())));
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Lays feature k of record i at element (i, k, 0, 0).
pub fn to_network_input(records: &[FlowRecord], codec: &LabelCodec) -> Result<Dataset> {
    let first = records
        .first()
        .ok_or_else(|| Error::Shape("no records to convert".into()))?;
    let d = first.features.len();
    let mut data = Vec::with_capacity(records.len() * d);
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        if r.features.len() != d {
            return Err(Error::Shape(format!("ragged feature vectors ({} vs {d})", r.features.len())));
        }
        data.extend_from_slice(&r.features);
        labels.push(codec.encode(&r.label)?);
    }
    let inputs = Tensor::new(vec![records.len(), d, 1, 1], data)?;
    Dataset::new(inputs, labels)
}

/// Class names used by the synthetic generator: the APT stage names for
/// k ≤ 5, otherwise `class{i}`.
pub fn synthetic_class_names(k: usize) -> Vec<String> {
    if k <= DAPT_CLASSES.len() {
        DAPT_CLASSES[..k].iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|i| format!("class{i}")).collect()
    }
}

/// Gaussian clusters: class centres are `separation` times a standard normal
/// vector, samples add unit-variance noise. Record i has class i mod k.
pub fn make_synthetic_blobs(n: usize, k: usize, d: usize, separation: f64, seed: u64) -> Result<Vec<FlowRecord>> {
    if k == 0 || d == 0 || n < k {
        return Err(Error::Config(format!("need n >= k >= 1 and d >= 1 (n={n}, k={k}, d={d})")));
    }
    let names = synthetic_class_names(k);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xb10b]));
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    separation * z
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let c = i % k;
            let features = centres[c]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (m + z) as f32
                })
                .collect();
            FlowRecord { features, label: names[c].clone() }
        })
        .collect())
}

//! Inference-time anomaly decisions from class probabilities.
//!
//! The score of a record is derived from the softmax output; a record is
//! anomalous when its score is strictly above the threshold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FlowRecord, ScalerStats};
use crate::error::{Error, Result};
use crate::metrics::{f1_score, ratio};
use crate::nn::SavedModel;
use crate::tensor::Tensor;
use crate::trainer::{argmax, evaluate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// 1 − p(benign)
    #[default]
    NonBenignMass,
    /// 1 − max_c p(c)
    OneMinusMaxProb,
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_benign_mass" => Ok(ScoreKind::NonBenignMass),
            "one_minus_max_prob" => Ok(ScoreKind::OneMinusMaxProb),
            other => Err(Error::Config(format!(
                "unknown score kind {other:?} (expected non_benign_mass or one_minus_max_prob)"
            ))),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::NonBenignMass => "non_benign_mass",
            ScoreKind::OneMinusMaxProb => "one_minus_max_prob",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionPolicy {
    pub threshold: f64,
    pub score_kind: ScoreKind,
    pub benign_class_index: usize,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        DetectionPolicy {
            threshold: 0.5,
            score_kind: ScoreKind::NonBenignMass,
            benign_class_index: 0,
        }
    }
}

impl DetectionPolicy {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if self.benign_class_index >= classes {
            return Err(Error::Label {
                label: self.benign_class_index,
                classes,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Anomalous,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Normal => "normal",
            Verdict::Anomalous => "anomalous",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub score: f64,
    pub verdict: Verdict,
    pub predicted_class: usize,
    pub probabilities: Vec<f64>,
}

pub fn anomaly_score(probabilities: &[f64], kind: ScoreKind, benign_class_index: usize) -> f64 {
    let s = match kind {
        ScoreKind::NonBenignMass => 1.0 - probabilities[benign_class_index],
        ScoreKind::OneMinusMaxProb => 1.0 - probabilities.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    s.clamp(0.0, 1.0)
}

pub fn verdict(score: f64, threshold: f64) -> Verdict {
    if score > threshold {
        Verdict::Anomalous
    } else {
        Verdict::Normal
    }
}

pub fn detect(probabilities: Vec<f64>, policy: &DetectionPolicy) -> Detection {
    let score = anomaly_score(&probabilities, policy.score_kind, policy.benign_class_index);
    Detection {
        score,
        verdict: verdict(score, policy.threshold),
        predicted_class: argmax(&probabilities),
        probabilities,
    }
}

/// A trained model with the scaler it was trained with.
#[derive(Clone, Debug)]
pub struct Detector {
    model: SavedModel,
    scaler: ScalerStats,
    policy: DetectionPolicy,
}

const SCORE_BATCH: usize = 1024;

impl Detector {
    pub fn new(model: SavedModel, scaler: ScalerStats, policy: DetectionPolicy) -> Result<Self> {
        if let Some(expected) = &model.scaler_fingerprint {
            let found = scaler.fingerprint();
            if *expected != found {
                return Err(Error::ScalerMismatch {
                    expected: expected.clone(),
                    found,
                });
            }
        }
        policy.validate(model.network.output_width())?;
        Ok(Detector { model, scaler, policy })
    }

    pub fn model(&self) -> &SavedModel {
        &self.model
    }

    pub fn policy(&self) -> &DetectionPolicy {
        &self.policy
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let policy = DetectionPolicy { threshold, ..self.policy.clone() };
        policy.validate(self.model.network.output_width())?;
        self.policy = policy;
        Ok(())
    }

    /// Cleans and scales raw records with the training-time statistics.
    pub fn prepare(&self, records: &[FlowRecord]) -> Result<Tensor<f32>> {
        let d = self.scaler.dims();
        let mut data = Vec::with_capacity(records.len() * d);
        let mut report = Default::default();
        for r in records {
            let mut f = r.features.clone();
            self.scaler.transform_row(&mut f, &mut report)?;
            data.extend_from_slice(&f);
        }
        let mut shape = vec![records.len()];
        shape.extend_from_slice(self.model.network.input_shape());
        Tensor::new(shape, data)
    }

    pub fn score(&self, record: &FlowRecord) -> Result<Detection> {
        Ok(self.score_batch(std::slice::from_ref(record))?.remove(0))
    }

    /// Scores every record independently; output order follows input order.
    pub fn score_batch(&self, records: &[FlowRecord]) -> Result<Vec<Detection>> {
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(SCORE_BATCH) {
            let x = self.prepare(chunk)?;
            let p = self.model.network.predict(&x)?;
            for r in 0..chunk.len() {
                let probs = p.row(r).iter().map(|&v| v as f64).collect();
                out.push(detect(probs, &self.policy));
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationTarget {
    /// Maximise benign-vs-rest F1 (anomalous = positive); ties go to the
    /// lowest threshold.
    MaxF1,
    /// Lowest threshold whose false-positive rate is at most the given value.
    FprAt(f64),
}

impl FromStr for CalibrationTarget {
    type Err = Error;

    /// `max_f1` or `fpr_at:<x>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "max_f1" {
            return Ok(CalibrationTarget::MaxF1);
        }
        if let Some(x) = s.strip_prefix("fpr_at:") {
            let v: f64 = x
                .parse()
                .map_err(|_| Error::Config(format!("bad fpr_at value {x:?}")))?;
            if (0.0..=1.0).contains(&v) {
                return Ok(CalibrationTarget::FprAt(v));
            }
        }
        Err(Error::Config(format!("unknown calibration target {s:?} (max_f1 or fpr_at:<x>)")))
    }
}

/// Counts at one threshold: (tp, fp, fn, tn) with anomalous as positive.
fn counts_at(scores: &[f64], anomalous: &[bool], threshold: f64) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (&s, &a) in scores.iter().zip(anomalous) {
        match (verdict(s, threshold) == Verdict::Anomalous, a) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

/// Picks a threshold from `{0} ∪ scores`, every value at which a verdict can
/// change.
pub fn threshold_from_scores(scores: &[f64], anomalous: &[bool], target: CalibrationTarget) -> Result<f64> {
    if scores.len() != anomalous.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), anomalous.len())));
    }
    let pos = anomalous.iter().filter(|&&a| a).count();
    if pos == 0 || pos == anomalous.len() {
        return Err(Error::DegenerateClass(format!(
            "calibration needs benign and non-benign records ({pos} of {} non-benign)",
            anomalous.len()
        )));
    }
    let mut candidates: Vec<f64> = scores.iter().copied().filter(|s| (0.0..=1.0).contains(s)).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    match target {
        CalibrationTarget::MaxF1 => {
            let mut best = (candidates[0], f64::NEG_INFINITY);
            for &t in &candidates {
                let (tp, fp, fn_, _) = counts_at(scores, anomalous, t);
                let f1 = f1_score(ratio(tp, tp + fp), ratio(tp, tp + fn_)).unwrap_or(0.0);
                if f1 > best.1 {
                    best = (t, f1);
                }
            }
            Ok(best.0)
        }
        CalibrationTarget::FprAt(x) => {
            for &t in &candidates {
                let (_, fp, _, tn) = counts_at(scores, anomalous, t);
                if fp as f64 / (fp + tn) as f64 <= x {
                    return Ok(t);
                }
            }
            // the largest score flags nothing, so the loop always returns
            Ok(*candidates.last().expect("non-empty"))
        }
    }
}

/// Scores a labelled validation set with `model` and calibrates.
pub fn calibrate_threshold(
    model: &SavedModel,
    validation: &Dataset,
    policy: &DetectionPolicy,
    target: CalibrationTarget,
) -> Result<f64> {
    policy.validate(model.network.output_width())?;
    let eval = evaluate(&model.network, validation)?;
    let scores: Vec<f64> = eval
        .probabilities
        .iter()
        .map(|p| anomaly_score(p, policy.score_kind, policy.benign_class_index))
        .collect();
    let anomalous: Vec<bool> = validation.labels.iter().map(|&l| l != policy.benign_class_index).collect();
    threshold_from_scores(&scores, &anomalous, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn certain_benign_scores_zero() {
        let d = detect(vec![1.0, 0.0, 0.0], &DetectionPolicy { threshold: 1e-9, ..Default::default() });
        assert_eq!(d.score, 0.0);
        assert_eq!(d.verdict, Verdict::Normal);
    }

    #[test]
    fn uniform_five_classes() {
        let p = vec![0.2; 5];
        assert!((anomaly_score(&p, ScoreKind::NonBenignMass, 0) - 0.8).abs() < 1e-15);
        assert!((anomaly_score(&p, ScoreKind::OneMinusMaxProb, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn threshold_zero_flags_nonzero_scores() {
        let policy = DetectionPolicy { threshold: 0.0, ..Default::default() };
        assert_eq!(detect(vec![0.999, 0.001], &policy).verdict, Verdict::Anomalous);
        assert_eq!(detect(vec![1.0, 0.0], &policy).verdict, Verdict::Normal);
    }

    #[test]
    fn separable_scores_reach_f1_one() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8];
        let anomalous = [false, false, false, true, true];
        let t = threshold_from_scores(&scores, &anomalous, CalibrationTarget::MaxF1).unwrap();
        assert_eq!(t, 0.3);
    }

    #[test]
    fn equal_scores_give_zero() {
        let t = threshold_from_scores(&[0.4; 4], &[true, false, true, false], CalibrationTarget::MaxF1).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn fpr_target() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8, 0.25];
        let anomalous = [false, false, false, true, true, true];
        assert_eq!(threshold_from_scores(&scores, &anomalous, CalibrationTarget::FprAt(0.0)).unwrap(), 0.3);
        assert_eq!(threshold_from_scores(&scores, &anomalous, CalibrationTarget::FprAt(0.34)).unwrap(), 0.2);
        assert_eq!(threshold_from_scores(&scores, &anomalous, CalibrationTarget::FprAt(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn one_sided_calibration_is_degenerate() {
        assert!(matches!(
            threshold_from_scores(&[0.1, 0.2], &[true, true], CalibrationTarget::MaxF1),
            Err(Error::DegenerateClass(_))
        ));
    }

    #[test]
    fn parse_targets_and_kinds() {
        assert_eq!("max_f1".parse::<CalibrationTarget>().unwrap(), CalibrationTarget::MaxF1);
        assert_eq!("fpr_at:0.05".parse::<CalibrationTarget>().unwrap(), CalibrationTarget::FprAt(0.05));
        assert!("fpr_at:2".parse::<CalibrationTarget>().is_err());
        assert_eq!("one_minus_max_prob".parse::<ScoreKind>().unwrap(), ScoreKind::OneMinusMaxProb);
        assert_eq!(ScoreKind::NonBenignMass.to_string(), "non_benign_mass");
    }

    fn probs() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 5).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn score_in_unit_interval_and_verdict_monotone(p in probs(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0, kind in any::<bool>()) {
            let kind = if kind { ScoreKind::NonBenignMass } else { ScoreKind::OneMinusMaxProb };
            let s = anomaly_score(&p, kind, 0);
            prop_assert!((0.0..=1.0).contains(&s));
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if verdict(s, lo) == Verdict::Normal {
                prop_assert_eq!(verdict(s, hi), Verdict::Normal);
            }
        }
    }
}

//! Cross-checks between detector scoring, the ROC sweep and threshold
//! calibration. Shared by the detector tests and the acceptance suite.

#![allow(dead_code)]

use csocnn_core::data::Dataset;
use csocnn_core::detector::{
    calibrate_threshold, detect, threshold_from_scores, CalibrationTarget, DetectionPolicy, ScoreKind, Verdict,
};
use csocnn_core::metrics::{roc_binary, roc_curve};
use csocnn_core::nn::{Activation, LayerSpec, Network, SavedModel};
use csocnn_core::Tensor;

pub const BENIGN: usize = 0;

/// Labelled probability rows over three classes, benign first. Values are
/// multiples of 1/16 so 1 - p is exact; p(benign) < 1 keeps every score
/// positive, and several rows tie.
pub fn labelled_fixture() -> (Vec<usize>, Vec<Vec<f64>>) {
    let rows: [(usize, [u32; 3]); 12] = [
        (0, [15, 1, 0]),
        (0, [14, 1, 1]),
        (0, [12, 2, 2]),
        (0, [12, 4, 0]),
        (0, [9, 5, 2]),
        (0, [6, 8, 2]),
        (1, [10, 6, 0]),
        (1, [6, 9, 1]),
        (1, [3, 12, 1]),
        (2, [12, 0, 4]),
        (2, [4, 2, 10]),
        (2, [1, 1, 14]),
    ];
    let labels = rows.iter().map(|r| r.0).collect();
    let probs = rows.iter().map(|r| r.1.iter().map(|&v| v as f64 / 16.0).collect()).collect();
    (labels, probs)
}

/// Sweeps the detector threshold over every distinct score and checks that
/// the (fpr, tpr) pairs are exactly the ROC points for anomalous-vs-benign,
/// and that the curve mirrors the benign-vs-rest curve from class
/// probabilities.
pub fn sweep_matches_roc(labels: &[usize], probs: &[Vec<f64>]) -> Result<(), String> {
    let policy = |threshold| DetectionPolicy { threshold, score_kind: ScoreKind::NonBenignMass, benign_class_index: BENIGN };
    let anomalous: Vec<bool> = labels.iter().map(|&l| l != BENIGN).collect();
    let scores: Vec<f64> = probs.iter().map(|p| detect(p.clone(), &policy(0.5)).score).collect();
    if scores.iter().any(|&s| s <= 0.0) {
        return Err("fixture needs strictly positive scores".into());
    }
    let roc = roc_binary(&anomalous, &scores).map_err(|e| e.to_string())?;

    let mut distinct = scores.clone();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    let pos = anomalous.iter().filter(|&&a| a).count() as f64;
    let neg = anomalous.len() as f64 - pos;
    // "score >= s" equals "score > next lower score"; below the minimum, 0
    let mut swept = vec![(0.0, 0.0)];
    for (i, _) in distinct.iter().enumerate() {
        let t = distinct.get(i + 1).copied().unwrap_or(0.0);
        let (mut tp, mut fp) = (0.0, 0.0);
        for (p, &a) in probs.iter().zip(&anomalous) {
            if detect(p.clone(), &policy(t)).verdict == Verdict::Anomalous {
                if a {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        swept.push((fp / neg, tp / pos));
    }
    let points: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    if swept != points {
        return Err(format!("sweep {swept:?} vs roc {points:?}"));
    }

    let benign_curve = roc_curve(labels, probs, BENIGN).map_err(|e| e.to_string())?;
    let mut mirrored: Vec<(f64, f64)> = benign_curve.points.iter().map(|p| (1.0 - p.tpr, 1.0 - p.fpr)).collect();
    mirrored.reverse();
    // 1 - (a / b) is not bit-identical to (b - a) / b
    let close = mirrored.len() == points.len()
        && mirrored.iter().zip(&points).all(|(a, b)| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    if !close {
        return Err(format!("benign-vs-rest mirror {mirrored:?} vs {points:?}"));
    }
    if (benign_curve.auc - roc.auc).abs() > 1e-12 {
        return Err(format!("auc {} vs {}", benign_curve.auc, roc.auc));
    }
    Ok(())
}

fn f1_at(scores: &[f64], anomalous: &[bool], t: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &a) in scores.iter().zip(anomalous) {
        match (s > t, a) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn fpr_at(scores: &[f64], anomalous: &[bool], t: f64) -> f64 {
    let neg = anomalous.iter().filter(|&&a| !a).count() as f64;
    scores.iter().zip(anomalous).filter(|&(&s, &a)| !a && s > t).count() as f64 / neg
}

/// Every threshold worth trying: a fine grid plus the scores themselves.
fn exhaustive(scores: &[f64]) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
    ts.extend_from_slice(scores);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Lowest threshold reaching the best F1 and the lowest meeting each FPR
/// budget, by brute force.
pub fn calibration_matches_enumeration(scores: &[f64], anomalous: &[bool]) -> Result<(), String> {
    let ts = exhaustive(scores);
    let best = ts.iter().map(|&t| f1_at(scores, anomalous, t)).fold(f64::MIN, f64::max);
    // the F1 above and the library's may differ in the last bit
    let want = ts.iter().copied().find(|&t| f1_at(scores, anomalous, t) >= best - 1e-12).unwrap();
    let got = threshold_from_scores(scores, anomalous, CalibrationTarget::MaxF1).map_err(|e| e.to_string())?;
    if got != want {
        return Err(format!("max_f1: {got} vs exhaustive {want} (F1 {best})"));
    }
    for x in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let want = ts.iter().copied().find(|&t| fpr_at(scores, anomalous, t) <= x).unwrap();
        let got = threshold_from_scores(scores, anomalous, CalibrationTarget::FprAt(x)).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("fpr_at:{x}: {got} vs exhaustive {want}"));
        }
    }
    Ok(())
}

/// Twenty hand-picked scores, anomalous = positive, with ties across the
/// two groups.
pub fn twenty_sample_fixture() -> (Vec<f64>, Vec<bool>) {
    let rows = [
        (0.02, false),
        (0.05, false),
        (0.05, false),
        (0.10, false),
        (0.15, true),
        (0.20, false),
        (0.25, false),
        (0.30, true),
        (0.35, false),
        (0.40, true),
        (0.40, false),
        (0.55, true),
        (0.60, false),
        (0.65, true),
        (0.70, true),
        (0.75, false),
        (0.80, true),
        (0.90, true),
        (0.95, true),
        (0.99, true),
    ];
    (rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect())
}

/// Two-feature model whose softmax sees the features unchanged, so a record
/// (0, z) gets p(benign) = 1 / (1 + e^z).
pub fn passthrough_model() -> SavedModel {
    let layers = vec![LayerSpec::input(), LayerSpec::dense(2).with_activation(Activation::Softmax)];
    let mut network = Network::<f32>::new(layers, &[2], 0).unwrap();
    let mut params = network.trainable_params_mut();
    params[0].data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    params[1].data_mut().fill(0.0);
    SavedModel { network, class_names: vec!["Benign".into(), "Attack".into()], scaler_fingerprint: None }
}

/// calibrate_threshold on a model-backed validation set agrees with
/// brute-force enumeration over the scores that model produces.
pub fn model_calibration_matches_enumeration() -> Result<(), String> {
    let model = passthrough_model();
    let (fixture_scores, anomalous) = twenty_sample_fixture();
    // logit that makes 1 - p(benign) land near each fixture score
    let zs: Vec<f32> = fixture_scores.iter().map(|&s| (s / (1.0 - s)).ln() as f32).collect();
    let inputs: Vec<f32> = zs.iter().flat_map(|&z| [0.0, z]).collect();
    let labels: Vec<usize> = anomalous.iter().map(|&a| a as usize).collect();
    let val = Dataset::new(Tensor::new(vec![zs.len(), 2], inputs.clone()).unwrap(), labels).map_err(|e| e.to_string())?;
    let probs = model.network.predict(&Tensor::new(vec![zs.len(), 2], inputs).unwrap()).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = (0..zs.len()).map(|i| (1.0 - probs.row(i)[0] as f64).clamp(0.0, 1.0)).collect();
    let policy = DetectionPolicy { threshold: 0.5, score_kind: ScoreKind::NonBenignMass, benign_class_index: BENIGN };
    for target in [CalibrationTarget::MaxF1, CalibrationTarget::FprAt(0.1), CalibrationTarget::FprAt(0.3)] {
        let got = calibrate_threshold(&model, &val, &policy, target).map_err(|e| e.to_string())?;
        let want = threshold_from_scores(&scores, &anomalous, target).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("{target:?}: model {got} vs scores {want}"));
        }
    }
    calibration_matches_enumeration(&scores, &anomalous)
}

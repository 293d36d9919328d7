#[path = "support/detector_oracle.rs"]
mod detector_oracle;

use csocnn_core::detector::{detect, DetectionPolicy, ScoreKind, Verdict};
use proptest::prelude::*;

#[test]
fn threshold_sweep_reproduces_benign_vs_rest_roc() {
    let (labels, probs) = detector_oracle::labelled_fixture();
    detector_oracle::sweep_matches_roc(&labels, &probs).unwrap();
}

#[test]
fn twenty_sample_calibration_matches_enumeration() {
    let (scores, anomalous) = detector_oracle::twenty_sample_fixture();
    detector_oracle::calibration_matches_enumeration(&scores, &anomalous).unwrap();
}

#[test]
fn model_backed_calibration_matches_enumeration() {
    detector_oracle::model_calibration_matches_enumeration().unwrap();
}

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-9;
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn random_sweeps_reproduce_roc(
        rows in proptest::collection::vec((0usize..3, simplex(3)), 4..30),
    ) {
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        prop_assume!(labels.contains(&0) && labels.iter().any(|&l| l != 0));
        // keep every score strictly positive
        let probs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut p = r.1.clone();
                p[0] = p[0].min(0.999);
                p
            })
            .collect();
        // 1 - p is not injective in floating point; skip inputs where two
        // benign probabilities collapse onto one score
        let mut pb: Vec<f64> = probs.iter().map(|p| p[0]).collect();
        pb.sort_by(f64::total_cmp);
        pb.dedup();
        let mut s: Vec<f64> = pb.iter().map(|p| 1.0 - p).collect();
        s.dedup();
        prop_assume!(s.len() == pb.len());
        prop_assert!(detector_oracle::sweep_matches_roc(&labels, &probs).is_ok(), "{:?}", detector_oracle::sweep_matches_roc(&labels, &probs));
    }

    #[test]
    fn verdict_is_strictly_above_threshold(p in simplex(5), t in 0.0f64..1.0) {
        let d = detect(p, &DetectionPolicy { threshold: t, score_kind: ScoreKind::OneMinusMaxProb, benign_class_index: 0 });
        prop_assert!((0.0..=1.0).contains(&d.score));
        prop_assert_eq!(d.verdict == Verdict::Anomalous, d.score > t);
    }
}

#[path = "support/metric_oracle.rs"]
mod metric_oracle;

use csocnn_core::metrics::{
    basic_rates, confusion, f1_score, roc_binary, scalar_metrics, ConfusionMatrix, UndefinedPolicy,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_matrices_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut undefined_seen = 0;
    for case in 0..1000 {
        let (truth, predicted, k) = metric_oracle::random_pairs(&mut rng);
        let cm = confusion(&truth, &predicted, k).unwrap();
        let oracle = metric_oracle::brute_force(&truth, &predicted, k);
        assert_eq!(cm.rows(), oracle.grid, "case {case}");
        let m = scalar_metrics(&cm, UndefinedPolicy::Strict).unwrap();
        if let Err(e) = metric_oracle::compare(&m, &oracle) {
            panic!("case {case} (k={k}, n={}): {e}", truth.len());
        }
        undefined_seen += m.macro_avg.precision.is_none() as usize;
    }
    // the generator is meant to exercise the undefined paths too
    assert!(undefined_seen > 50, "{undefined_seen}");
}

#[test]
fn published_class_figures() {
    assert_eq!((f1_score(Some(0.84), Some(0.94)).unwrap() * 100.0).round() / 100.0, 0.89);
    let diagonal = 8609 + 2060 + 1664 + 464 + 2300;
    assert_eq!(diagonal, 15097);
    let acc = diagonal as f64 / 15351.0;
    assert_eq!(format!("{acc:.4}"), "0.9835");

    // benign row: 8716 support, 8609 on the diagonal
    let mut grid = vec![vec![0u64; 2]; 2];
    grid[0][0] = 8609;
    grid[0][1] = 8716 - 8609;
    grid[1][1] = 10;
    let cm = ConfusionMatrix::from_counts(&grid, vec!["Benign".into(), "Other".into()]).unwrap();
    let r = basic_rates(&cm, 0);
    assert_eq!((r.tp, r.fn_), (8609, 107));
}

/// AUC as P(pos > neg) + P(tie) / 2 over every pair.
fn concordance(pos: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn six_sample_auc_is_pairwise_concordance() {
    let pos = [true, false, true, false, true, false];
    let scores = [0.9, 0.8, 0.6, 0.6, 0.3, 0.1];
    // pos 0.9 beats all 3; 0.6 beats 0.1, ties 0.6, loses to 0.8; 0.3 beats 0.1
    let want = (3.0 + 1.5 + 1.0) / 9.0;
    assert!((concordance(&pos, &scores) - want).abs() < 1e-15);
    let roc = roc_binary(&pos, &scores).unwrap();
    assert!((roc.auc - want).abs() < 1e-12, "{} vs {want}", roc.auc);
}

fn scored() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            // a coarse grid so ties are common
            proptest::collection::vec((0u8..12).prop_map(|v| v as f64 / 11.0), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auc_matches_concordance((pos, scores) in scored()) {
        prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
        let roc = roc_binary(&pos, &scores).unwrap();
        prop_assert!((roc.auc - concordance(&pos, &scores)).abs() < 1e-12);
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn auc_ignores_monotone_transforms((pos, scores) in scored()) {
        prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
        let a = roc_binary(&pos, &scores).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).exp() / 7.0 + 2.0).collect();
        let b = roc_binary(&pos, &squashed).unwrap();
        prop_assert!((a.auc - b.auc).abs() < 1e-12);
        let pa: Vec<_> = a.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        let pb: Vec<_> = b.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn rates_partition_the_total(seed in any::<u64>()) {
        let (truth, predicted, k) = metric_oracle::random_pairs(&mut ChaCha8Rng::seed_from_u64(seed));
        let cm = confusion(&truth, &predicted, k).unwrap();
        for c in 0..k {
            let r = basic_rates(&cm, c);
            prop_assert_eq!(r.tp + r.fp + r.tn + r.fn_, cm.total());
        }
    }

    #[test]
    fn weighted_recall_is_accuracy(seed in any::<u64>()) {
        let (truth, predicted, k) = metric_oracle::random_pairs(&mut ChaCha8Rng::seed_from_u64(seed));
        let m = scalar_metrics(&confusion(&truth, &predicted, k).unwrap(), UndefinedPolicy::CoerceZero).unwrap();
        prop_assert!((m.weighted_avg.recall.unwrap() - m.accuracy).abs() < 1e-12);
    }
}

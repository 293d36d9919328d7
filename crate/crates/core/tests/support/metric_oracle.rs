//! Brute-force metric reference that counts straight from (truth, predicted)
//! pairs. Shared by the metric tests and the acceptance suite.

#![allow(dead_code)]

use csocnn_core::metrics::{Averaged, ClassMetrics, MetricSet};

fn div(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    let (p, r) = (p?, r?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

pub struct Oracle {
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averaged,
    pub weighted_avg: Averaged,
    pub micro_avg: Averaged,
    pub accuracy: f64,
    pub p_e: f64,
    pub kappa: Option<f64>,
    pub grid: Vec<Vec<u64>>,
}

pub fn brute_force(truth: &[usize], predicted: &[usize], k: usize) -> Oracle {
    let n = truth.len() as u64;
    let grid: Vec<Vec<u64>> = (0..k)
        .map(|t| {
            (0..k)
                .map(|p| truth.iter().zip(predicted).filter(|&(&a, &b)| a == t && b == p).count() as u64)
                .collect()
        })
        .collect();
    let mut per_class = Vec::new();
    let (mut tps, mut fps, mut tns, mut fns) = (0, 0, 0, 0);
    for c in 0..k {
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        tps += tp;
        fps += fp;
        tns += tn;
        fns += fn_;
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fn_);
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            specificity: div(tn, tn + fp),
            npv: div(tn, tn + fn_),
            support: tp + fn_,
        });
    }

    let avg = |pick: fn(&ClassMetrics) -> Option<f64>, weighted: bool| -> Option<f64> {
        let mut sum = 0.0;
        for c in &per_class {
            let v = pick(c)?;
            sum += if weighted { v * c.support as f64 } else { v };
        }
        Some(if weighted { sum / n as f64 } else { sum / k as f64 })
    };
    let averaged = |weighted| Averaged {
        precision: avg(|c| c.precision, weighted),
        recall: avg(|c| c.recall, weighted),
        f1: avg(|c| c.f1, weighted),
        specificity: avg(|c| c.specificity, weighted),
        npv: avg(|c| c.npv, weighted),
    };
    let micro_p = div(tps, tps + fps);
    let micro_r = div(tps, tps + fns);

    let agree = truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as u64;
    let accuracy = agree as f64 / n as f64;
    let mut chance = 0.0;
    for c in 0..k {
        let rows = truth.iter().filter(|&&t| t == c).count() as f64;
        let cols = predicted.iter().filter(|&&p| p == c).count() as f64;
        chance += rows * cols;
    }
    let p_e = chance / (n as f64 * n as f64);
    Oracle {
        macro_avg: averaged(false),
        weighted_avg: averaged(true),
        micro_avg: Averaged {
            precision: micro_p,
            recall: micro_r,
            f1: harmonic(micro_p, micro_r),
            specificity: div(tns, tns + fps),
            npv: div(tns, tns + fns),
        },
        per_class,
        accuracy,
        p_e,
        kappa: (p_e < 1.0).then(|| (accuracy - p_e) / (1.0 - p_e)),
        grid,
    }
}

fn bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

fn same_avg(a: &Averaged, b: &Averaged) -> bool {
    [
        (a.precision, b.precision),
        (a.recall, b.recall),
        (a.f1, b.f1),
        (a.specificity, b.specificity),
        (a.npv, b.npv),
    ]
    .iter()
    .all(|(x, y)| bits(*x) == bits(*y))
}

/// Bit-for-bit comparison; returns a description of the first mismatch.
pub fn compare(m: &MetricSet, o: &Oracle) -> Result<(), String> {
    if m.accuracy.to_bits() != o.accuracy.to_bits() || m.p_o.to_bits() != o.accuracy.to_bits() {
        return Err(format!("accuracy {} vs {}", m.accuracy, o.accuracy));
    }
    if m.p_e.to_bits() != o.p_e.to_bits() {
        return Err(format!("p_e {} vs {}", m.p_e, o.p_e));
    }
    if bits(m.kappa) != bits(o.kappa) {
        return Err(format!("kappa {:?} vs {:?}", m.kappa, o.kappa));
    }
    for (i, (a, b)) in m.per_class.iter().zip(&o.per_class).enumerate() {
        let same = a.support == b.support
            && [
                (a.precision, b.precision),
                (a.recall, b.recall),
                (a.f1, b.f1),
                (a.specificity, b.specificity),
                (a.npv, b.npv),
            ]
            .iter()
            .all(|(x, y)| bits(*x) == bits(*y));
        if !same {
            return Err(format!("class {i}: {a:?} vs {b:?}"));
        }
    }
    if !same_avg(&m.macro_avg, &o.macro_avg) {
        return Err(format!("macro {:?} vs {:?}", m.macro_avg, o.macro_avg));
    }
    if !same_avg(&m.weighted_avg, &o.weighted_avg) {
        return Err(format!("weighted {:?} vs {:?}", m.weighted_avg, o.weighted_avg));
    }
    if !same_avg(&m.micro_avg, &o.micro_avg) {
        return Err(format!("micro {:?} vs {:?}", m.micro_avg, o.micro_avg));
    }
    Ok(())
}

/// Random label pairs with a skewed class mix so that empty rows and
/// columns (undefined metrics) show up regularly.
pub fn random_pairs<R: rand::Rng>(rng: &mut R) -> (Vec<usize>, Vec<usize>, usize) {
    let k = rng.random_range(1..=6);
    let n = rng.random_range(1..=200);
    let weights: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() + 0.05 }).collect();
    let total: f64 = weights.iter().sum();
    let draw = |rng: &mut R| -> usize {
        if total == 0.0 {
            return 0;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        k - 1
    };
    let truth: Vec<usize> = (0..n).map(|_| draw(rng)).collect();
    let predicted = truth
        .iter()
        .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..k) })
        .collect();
    (truth, predicted, k)
}

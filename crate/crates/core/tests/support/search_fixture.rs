//! Synthetic datasets and a random-search baseline for the hyperparameter
//! search. Shared by the pipeline tests and the acceptance suite.

#![allow(dead_code)]

use csocnn_core::cso::SwarmFitness;
use csocnn_core::data::{clean_and_scale, make_synthetic_blobs, split, synthetic_class_names, to_network_input, LabelCodec, SplitSpec};
use csocnn_core::derive_seed;
use csocnn_core::hyperopt::{decode, evaluate_candidate, CandidateSetup, Datasets, Fitness, SearchSpace};
use csocnn_core::nn::{Activation, LayerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Prepared {
    pub datasets: Datasets,
    pub test: csocnn_core::data::Dataset,
    pub input_shape: Vec<usize>,
}

/// Blobs split with the default fractions, scaled on the training part.
pub fn blobs(n: usize, k: usize, d: usize, separation: f64, seed: u64) -> Prepared {
    let records = make_synthetic_blobs(n, k, d, separation, seed).unwrap();
    let (train, val, test) = split(&records, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
    let (train, scaler, _) = clean_and_scale(&train).unwrap();
    let (val, _) = scaler.transform(&val).unwrap();
    let (test, _) = scaler.transform(&test).unwrap();
    let codec = LabelCodec::new(synthetic_class_names(k)).unwrap();
    Prepared {
        datasets: Datasets {
            train: to_network_input(&train, &codec).unwrap(),
            val: to_network_input(&val, &codec).unwrap(),
        },
        test: to_network_input(&test, &codec).unwrap(),
        input_shape: vec![d, 1, 1],
    }
}

/// A small conv net for fast searches on narrow inputs.
pub fn small_architecture(k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::input(),
        LayerSpec::conv2d(4, (3, 1)),
        LayerSpec::batch_norm().with_activation(Activation::Relu),
        LayerSpec::max_pool((2, 1)),
        LayerSpec::flatten(),
        LayerSpec::dense(8).with_activation(Activation::Relu),
        LayerSpec::dense(k).with_activation(Activation::Softmax),
    ]
}

/// Best fitness over `samples` uniform draws from the unit cube, each
/// trained with its own derived seed.
pub fn random_search(space: &SearchSpace, setup: &CandidateSetup<'_>, samples: usize, seed: u64) -> Fitness {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = Fitness::worst();
    for i in 0..samples {
        let p: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let hp = decode(&p, space).unwrap();
        let f = evaluate_candidate(&hp, setup, derive_seed(seed, &[i as u64])).unwrap();
        if f.compare(&best).is_gt() {
            best = f;
        }
    }
    best
}

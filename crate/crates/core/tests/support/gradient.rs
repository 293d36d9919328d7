//! Central finite-difference check of the analytic gradients. Shared by the
//! gradient tests and the acceptance suite.

#![allow(dead_code)]

use csocnn_core::nn::{loss_sparse_ce, Activation, LayerSpec, Mode, Network, Padding};
use csocnn_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
// below this magnitude both gradients count as zero
pub const FLOOR: f64 = 1e-6;

fn loss(net: &mut Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let (p, _) = net.forward(x, Mode::Train).unwrap();
    loss_sparse_ce(&p, labels).unwrap()
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, FLOOR) over
/// every trainable parameter.
pub fn max_relative_error(net: &mut Network<f64>, x: &Tensor<f64>, labels: &[usize], step: f64) -> f64 {
    max_relative_error_over_steps(net, x, labels, &[step])
}

/// Like `max_relative_error`, but each parameter keeps its best error over
/// the given steps.
pub fn max_relative_error_over_steps(net: &mut Network<f64>, x: &Tensor<f64>, labels: &[usize], steps: &[f64]) -> f64 {
    let (_, cache) = net.forward(x, Mode::Train).unwrap();
    let grads = net.backward(&cache, labels).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..grads.0.len() {
        for j in 0..grads.0[t].len() {
            let orig = net.trainable_params()[t].data()[j];
            let analytic = grads.0[t].data()[j];
            let mut best = f64::INFINITY;
            for &step in steps {
                net.trainable_params_mut()[t].data_mut()[j] = orig + step;
                let up = loss(net, x, labels);
                net.trainable_params_mut()[t].data_mut()[j] = orig - step;
                let down = loss(net, x, labels);
                net.trainable_params_mut()[t].data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * step);
                best = best.min((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR));
            }
            worst = worst.max(best);
        }
    }
    worst
}

pub fn batch(n: usize, shape: &[usize], k: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: usize = shape.iter().product();
    let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut full = vec![n];
    full.extend_from_slice(shape);
    let labels = (0..n).map(|i| i % k).collect();
    (Tensor::new(full, data).unwrap(), labels)
}

pub fn toy_layers(filters: usize, kernel: usize, pool: usize, hidden: usize, k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::input(),
        LayerSpec::conv2d(filters, (kernel, 1)),
        LayerSpec::batch_norm().with_activation(Activation::Relu),
        LayerSpec::max_pool((pool, 1)).with_padding(Padding::Same),
        LayerSpec::flatten(),
        LayerSpec::dense(hidden).with_activation(Activation::Relu),
        LayerSpec::dense(k).with_activation(Activation::Softmax),
    ]
}

pub type Case = (&'static str, Network<f64>, Tensor<f64>, Vec<usize>);

/// Fixed toy networks, each with every layer kind, and a batch for each.
pub fn fixed_cases() -> Vec<Case> {
    let single = Network::<f64>::new(toy_layers(3, 3, 2, 6, 3), &[9, 1, 1], 11).unwrap();
    let (x1, l1) = batch(6, &[9, 1, 1], 3, 5);
    let stacked = vec![
        LayerSpec::input(),
        LayerSpec::conv2d(2, (2, 2)),
        LayerSpec::batch_norm(),
        LayerSpec::max_pool((2, 1)),
        LayerSpec::conv2d(2, (2, 1)),
        LayerSpec::batch_norm().with_activation(Activation::Relu),
        LayerSpec::flatten(),
        LayerSpec::dense(4).with_activation(Activation::Softmax),
    ];
    let two = Network::<f64>::new(stacked, &[7, 3, 2], 2).unwrap();
    let (x2, l2) = batch(5, &[7, 3, 2], 4, 9);
    vec![("single conv block", single, x1, l1), ("two conv blocks, 2 channels", two, x2, l2)]
}

#[path = "support/gradient.rs"]
mod gradient;

use csocnn_core::nn::Network;
use gradient::{batch, fixed_cases, max_relative_error, max_relative_error_over_steps, toy_layers, STEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fixed_toy_networks_match_finite_differences() {
    for (name, mut net, x, labels) in fixed_cases() {
        let count = net.count_params();
        assert!(count.total <= 500, "{name}: {count:?}");
        let err = max_relative_error(&mut net, &x, &labels, STEP);
        assert!(err < 1e-4, "{name}: max relative error {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_toy_networks(
        filters in 1usize..4,
        kernel in 1usize..4,
        pool in 1usize..3,
        hidden in 2usize..6,
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let layers = toy_layers(filters, kernel, pool, hidden, k);
        let mut net = Network::<f64>::new(layers, &[8, 1, 1], seed).unwrap();
        prop_assume!(net.count_params().total <= 500);
        // Zero biases can put a ReLU input exactly on its kink (e.g. a dense
        // unit whose inputs were all zeroed), where central differences
        // average both slopes. Nudge every parameter off such points.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for t in net.trainable_params_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let (x, labels) = batch(4, &[8, 1, 1], k, seed ^ 1);
        let err = max_relative_error(&mut net, &x, &labels, STEP);
        if err >= 1e-4 {
            // Two things make a correct gradient miss at the pinned step: a
            // lone filter feeding batch norm is sharply curved (O(h^2)
            // truncation), and a ReLU or max-pool kink can lie within h of the
            // point. Both vanish as h shrinks, parameter by parameter; a wrong
            // gradient does not.
            let steps = [STEP, STEP / 1e1, STEP / 1e2, STEP / 1e3, STEP / 1e4];
            let finer = max_relative_error_over_steps(&mut net, &x, &labels, &steps);
            prop_assert!(finer < 1e-4, "error {:e} at h, {:e} at the best step per parameter", err, finer);
        }
    }
}

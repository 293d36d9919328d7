//! Cat swarm optimisation of a compact 2D convolutional classifier for
//! network-flow intrusion detection.
//!
//! The crate is split by pipeline stage:
//!
//! - [`nn`]: tensors, layers, forward/backward passes, Adam, model files
//! - [`cso`]: the cat swarm optimiser over box-bounded real vectors
//! - [`data`]: CSV ingestion, cleaning, scaling, stratified splits
//! - [`trainer`]: mini-batch training with plateau LR reduction, early
//!   stopping and best-model checkpoints
//! - [`hyperopt`]: the swarm searching learning rate, batch size and epochs
//! - [`metrics`]: confusion matrices, per-class reports, kappa, ROC/AUC
//! - [`detector`]: probability-derived anomaly scores and thresholds

pub mod cso;
pub mod data;
pub mod detector;
pub mod error;
pub mod hyperopt;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

/// Derives an independent 64-bit seed from a base seed and a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    // splitmix64 over the path
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15 ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

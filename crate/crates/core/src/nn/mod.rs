//! A small convolutional network library: exactly the layer kinds needed by
//! the baseline flow classifier, with analytic backward passes.

mod adam;
mod layer;
mod loss;
mod model_io;
mod network;
mod ops;

pub use adam::{adam_step, AdamState};
pub use layer::{
    baseline_architecture, infer_shapes, Activation, LayerKind, LayerSpec, Padding, BASELINE_INPUT,
};
pub use loss::{loss_sparse_ce, LOG_CLAMP};
pub use model_io::{
    decode_model, encode_model, load_model, save_model, ModelManifest, SavedModel, TensorEntry,
    FORMAT_VERSION, MAGIC,
};
pub use network::{
    ForwardCache, Gradients, LayerParams, Mode, Network, ParamCount, BN_EPSILON, BN_MOMENTUM,
};

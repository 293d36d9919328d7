use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{
    infer_shapes, layer_param_count, pool_pad_before, Activation, LayerKind, LayerSpec,
};
use super::ops::{self, Dims};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T> {
    None,
    Conv {
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    BatchNorm {
        gamma: Tensor<T>,
        beta: Tensor<T>,
        moving_mean: Tensor<T>,
        moving_var: Tensor<T>,
    },
    Dense {
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
}

impl<T: Scalar> LayerParams<T> {
    /// All stored tensors in serialisation order, with their names.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![("weight", weight), ("bias", bias)]
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                moving_mean,
                moving_var,
            } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("moving_mean", moving_mean),
                ("moving_var", moving_var),
            ],
        }
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![("weight", weight), ("bias", bias)]
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                moving_mean,
                moving_var,
            } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("moving_mean", moving_mean),
                ("moving_var", moving_var),
            ],
        }
    }

    fn cast<U: Scalar>(&self) -> LayerParams<U> {
        match self {
            LayerParams::None => LayerParams::None,
            LayerParams::Conv { weight, bias } => LayerParams::Conv {
                weight: weight.cast(),
                bias: bias.cast(),
            },
            LayerParams::Dense { weight, bias } => LayerParams::Dense {
                weight: weight.cast(),
                bias: bias.cast(),
            },
            LayerParams::BatchNorm {
                gamma,
                beta,
                moving_mean,
                moving_var,
            } => LayerParams::BatchNorm {
                gamma: gamma.cast(),
                beta: beta.cast(),
                moving_mean: moving_mean.cast(),
                moving_var: moving_var.cast(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    None,
    BatchNorm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        mean: Vec<T>,
        var: Vec<T>,
    },
    Pool { argmax: Vec<usize> },
}

/// Intermediates kept by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    version: u64,
    mode: Mode,
    /// Post-activation output of every layer; index 0 is the batch itself.
    outputs: Vec<Tensor<T>>,
    aux: Vec<LayerCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradient tensors in the order of [`Network::trainable_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T>(pub Vec<Tensor<T>>);

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
    params: Vec<LayerParams<T>>,
    /// Bumped on every parameter mutation; stale caches are detected with it.
    version: u64,
    /// Train-mode forward passes so far; drives the running-stat debiasing.
    bn_updates: u64,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with Glorot-uniform kernels, zero biases and unit
    /// batch-norm scale.
    pub fn new(layers: Vec<LayerSpec>, input_shape: &[usize], seed: u64) -> Result<Self> {
        let shapes = infer_shapes(&layers, input_shape)?;
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if l.activation == Activation::Softmax && (i != last || l.kind != LayerKind::Dense) {
                return Err(Error::Shape(format!(
                    "softmax is only supported on the final Dense layer (layer {i})"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let input = if i == 0 { &shapes[0] } else { &shapes[i - 1] };
            let p = match layer.kind {
                LayerKind::Conv2D => {
                    let (kh, kw) = layer.kernel_or_err()?;
                    let f = layer.width_or_err()?;
                    let cin = input[2];
                    let shape = [kh, kw, cin, f];
                    LayerParams::Conv {
                        weight: glorot(&shape, kh * kw * cin, kh * kw * f, &mut rng),
                        bias: Tensor::zeros(&[f]),
                    }
                }
                LayerKind::Dense => {
                    let units = layer.width_or_err()?;
                    let fan_in = input[0];
                    LayerParams::Dense {
                        weight: glorot(&[fan_in, units], fan_in, units, &mut rng),
                        bias: Tensor::zeros(&[units]),
                    }
                }
                LayerKind::BatchNorm => {
                    let c = input[2];
                    LayerParams::BatchNorm {
                        gamma: Tensor::filled(&[c], T::one()),
                        beta: Tensor::zeros(&[c]),
                        moving_mean: Tensor::zeros(&[c]),
                        moving_var: Tensor::filled(&[c], T::one()),
                    }
                }
                _ => LayerParams::None,
            };
            params.push(p);
        }
        Ok(Network {
            layers,
            input_shape: input_shape.to_vec(),
            shapes,
            params,
            version: 0,
            bn_updates: 0,
        })
    }

    /// Reassembles a network from stored parameters, checking every shape.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        input_shape: &[usize],
        params: Vec<LayerParams<T>>,
    ) -> Result<Self> {
        let template = Self::new(layers, input_shape, 0)?;
        if params.len() != template.params.len() {
            return Err(Error::Shape(format!(
                "expected parameters for {} layers, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (i, (want, got)) in template.params.iter().zip(&params).enumerate() {
            let w: Vec<_> = want.named_tensors().iter().map(|(n, t)| (*n, t.shape().to_vec())).collect();
            let g: Vec<_> = got.named_tensors().iter().map(|(n, t)| (*n, t.shape().to_vec())).collect();
            if w != g {
                return Err(Error::Shape(format!(
                    "layer {i}: parameter shapes {g:?} do not match {w:?}"
                )));
            }
        }
        Ok(Network { params, ..template })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-layer output shapes, without the batch axis.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_width(&self) -> usize {
        self.shapes.last().map(|s| s.iter().product()).unwrap_or(0)
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of train-mode forward passes that updated running statistics.
    pub fn bn_updates(&self) -> u64 {
        self.bn_updates
    }

    pub fn set_bn_updates(&mut self, n: u64) {
        self.bn_updates = n;
    }

    /// Weight of the current batch in the running-statistic update after
    /// `t` updates: (1 − m) / (1 − mᵗ). The first update copies the batch
    /// statistics, later ones approach the plain momentum rule.
    pub fn bn_update_weight(t: u64) -> f64 {
        let m = BN_MOMENTUM;
        (1.0 - m) / (1.0 - m.powi(t.min(i32::MAX as u64) as i32))
    }

    pub fn count_params(&self) -> ParamCount {
        let mut trainable = 0;
        let mut non_trainable = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { &self.shapes[0] } else { &self.shapes[i - 1] };
            let (t, n) = layer_param_count(layer, input);
            trainable += t;
            non_trainable += n;
        }
        ParamCount {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }

    /// Per-layer (total) parameter counts.
    pub fn layer_param_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let input = if i == 0 { &self.shapes[0] } else { &self.shapes[i - 1] };
                let (t, n) = layer_param_count(layer, input);
                t + n
            })
            .collect()
    }

    /// Trainable tensors: (weight, bias) for Conv2D/Dense, (gamma, beta) for
    /// BatchNorm, in layer order.
    pub fn trainable_params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for p in &self.params {
            match p {
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.version += 1;
        let mut out = Vec::new();
        for p in &mut self.params {
            match p {
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// Converts every stored tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            input_shape: self.input_shape.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            version: 0,
            bn_updates: self.bn_updates,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match (n, {:?})",
                batch.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass. Pure: uses running batch-norm statistics.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for i in 1..self.layers.len() {
            let (y, _) = self.layer_forward(i, &x, Mode::Inference)?;
            x = y;
        }
        Ok(x)
    }

    /// Forward pass. Train mode uses batch statistics for batch norm, updates
    /// the running statistics and keeps everything needed by [`Network::backward`].
    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        outputs.push(batch.clone());
        aux.push(LayerCache::None);
        if mode == Mode::Train {
            self.bn_updates += 1;
        }
        let weight = T::cast(Self::bn_update_weight(self.bn_updates.max(1)));
        for i in 1..self.layers.len() {
            let (y, cache) = self.layer_forward(i, &outputs[i - 1], mode)?;
            if mode == Mode::Train {
                if let (
                    LayerCache::BatchNorm { mean, var, .. },
                    LayerParams::BatchNorm {
                        moving_mean,
                        moving_var,
                        ..
                    },
                ) = (&cache, &mut self.params[i])
                {
                    for (m, b) in moving_mean.data_mut().iter_mut().zip(mean) {
                        *m = (T::one() - weight) * *m + weight * *b;
                    }
                    for (m, b) in moving_var.data_mut().iter_mut().zip(var) {
                        *m = (T::one() - weight) * *m + weight * *b;
                    }
                }
            }
            outputs.push(y);
            aux.push(cache);
        }
        let out = outputs.last().cloned().expect("at least the input layer");
        Ok((
            out,
            ForwardCache {
                version: self.version,
                mode,
                outputs,
                aux,
            },
        ))
    }

    fn layer_forward(&self, i: usize, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, LayerCache<T>)> {
        let layer = &self.layers[i];
        let n = x.rows();
        let in_shape = &self.shapes[i - 1];
        let out_shape = &self.shapes[i];
        let mut full = vec![n];
        full.extend_from_slice(out_shape);
        let mut cache = LayerCache::None;
        let mut y = match (&self.params[i], layer.kind) {
            (LayerParams::Conv { weight, bias }, _) => {
                let mut out = Tensor::zeros(&full);
                let d = spatial_dims(n, in_shape);
                ops::conv_forward(x.data(), d, layer.kernel_or_err()?, weight.data(), bias.data(), out.data_mut());
                out
            }
            (
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    moving_mean,
                    moving_var,
                },
                _,
            ) => {
                let c = gamma.len();
                let (mean, var) = match mode {
                    Mode::Train => ops::channel_mean_var(x.data(), c),
                    Mode::Inference => (moving_mean.data().to_vec(), moving_var.data().to_vec()),
                };
                let eps = T::cast(BN_EPSILON);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut xhat = x.data().to_vec();
                for row in xhat.chunks_exact_mut(c) {
                    for ((v, m), s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - *m) * *s;
                    }
                }
                let mut out = xhat.clone();
                for row in out.chunks_exact_mut(c) {
                    for ((v, g), b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
                        *v = *g * *v + *b;
                    }
                }
                if mode == Mode::Train {
                    cache = LayerCache::BatchNorm {
                        xhat,
                        inv_std,
                        mean,
                        var,
                    };
                }
                Tensor::from_parts(full, out)?
            }
            (LayerParams::Dense { weight, bias }, _) => {
                let mut out = Tensor::zeros(&full);
                ops::dense_forward(x.data(), n, weight.data(), bias.data(), out.data_mut());
                out
            }
            (LayerParams::None, LayerKind::MaxPool2D) => {
                let kernel = layer.kernel_or_err()?;
                let pad = (
                    pool_pad_before(in_shape[0], kernel.0, layer.padding),
                    pool_pad_before(in_shape[1], kernel.1, layer.padding),
                );
                let mut out = Tensor::zeros(&full);
                let argmax = ops::max_pool_forward(
                    x.data(),
                    spatial_dims(n, in_shape),
                    kernel,
                    pad,
                    (out_shape[0], out_shape[1]),
                    out.data_mut(),
                );
                cache = LayerCache::Pool { argmax };
                out
            }
            (LayerParams::None, _) => x.clone().reshape(full)?,
        };
        match layer.activation {
            Activation::Relu => y.data_mut().iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = T::zero()
                }
            }),
            Activation::Softmax => {
                let w = y.row_len();
                ops::softmax_rows(y.data_mut(), w);
            }
            Activation::None => {}
        }
        Ok((y, cache))
    }

    /// Gradients of mean sparse categorical cross-entropy with respect to
    /// every trainable tensor.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Gradients<T>> {
        if cache.mode != Mode::Train {
            return Err(Error::State("backward needs a train-mode forward cache".into()));
        }
        if cache.version != self.version {
            return Err(Error::State(format!(
                "cache from parameter version {} is stale (now {})",
                cache.version, self.version
            )));
        }
        let last = self.layers.len() - 1;
        if self.layers[last].activation != Activation::Softmax {
            return Err(Error::State("backward needs a softmax output layer".into()));
        }
        let probs = &cache.outputs[last];
        let n = probs.rows();
        let k = probs.row_len();
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Label { label: bad, classes: k });
        }
        // softmax + cross-entropy: d(loss)/d(logits) = (p - onehot) / n
        let inv_n = T::cast(1.0 / n as f64);
        let mut grad = probs.clone();
        for (s, &l) in labels.iter().enumerate() {
            let row = &mut grad.data_mut()[s * k..(s + 1) * k];
            row[l] -= T::one();
            row.iter_mut().for_each(|v| *v *= inv_n);
        }

        let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.layers.len()];
        for i in (1..=last).rev() {
            let layer = &self.layers[i];
            if layer.activation == Activation::Relu {
                for (g, &o) in grad.data_mut().iter_mut().zip(cache.outputs[i].data()) {
                    if o <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let x = &cache.outputs[i - 1];
            let n = x.rows();
            let in_shape = &self.shapes[i - 1];
            let mut dx = Tensor::zeros(x.shape());
            match (&self.params[i], &cache.aux[i]) {
                (LayerParams::Conv { weight, bias }, _) => {
                    let mut dw = Tensor::zeros(weight.shape());
                    let mut db = Tensor::zeros(bias.shape());
                    ops::conv_backward(
                        x.data(),
                        spatial_dims(n, in_shape),
                        layer.kernel_or_err()?,
                        weight.data(),
                        grad.data(),
                        dw.data_mut(),
                        db.data_mut(),
                        dx.data_mut(),
                    );
                    per_layer[i] = vec![dw, db];
                }
                (LayerParams::Dense { weight, bias }, _) => {
                    let mut dw = Tensor::zeros(weight.shape());
                    let mut db = Tensor::zeros(bias.shape());
                    ops::dense_backward(
                        x.data(),
                        n,
                        weight.data(),
                        grad.data(),
                        dw.data_mut(),
                        db.data_mut(),
                        dx.data_mut(),
                    );
                    per_layer[i] = vec![dw, db];
                }
                (LayerParams::BatchNorm { gamma, beta, .. }, LayerCache::BatchNorm { xhat, inv_std, .. }) => {
                    let mut dg = Tensor::zeros(gamma.shape());
                    let mut dbeta = Tensor::zeros(beta.shape());
                    ops::batch_norm_backward(
                        xhat,
                        grad.data(),
                        gamma.data(),
                        inv_std,
                        dg.data_mut(),
                        dbeta.data_mut(),
                        dx.data_mut(),
                    );
                    per_layer[i] = vec![dg, dbeta];
                }
                (LayerParams::BatchNorm { .. }, _) => {
                    return Err(Error::State("batch-norm cache missing".into()));
                }
                (LayerParams::None, LayerCache::Pool { argmax }) => {
                    let dxd = dx.data_mut();
                    for (&src, &g) in argmax.iter().zip(grad.data()) {
                        dxd[src] += g;
                    }
                }
                (LayerParams::None, _) => {
                    dx.data_mut().copy_from_slice(grad.data());
                }
            }
            grad = dx;
        }
        Ok(Gradients(per_layer.into_iter().flatten().collect()))
    }
}

fn spatial_dims(n: usize, shape: &[usize]) -> Dims {
    Dims {
        n,
        h: shape[0],
        w: shape[1],
        c: shape[2],
    }
}

fn glorot<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::cast(rng.random_range(-limit..limit))).collect();
    Tensor::from_parts(shape.to_vec(), data).expect("shape and length agree")
}

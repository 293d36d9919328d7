use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    Conv2D,
    BatchNorm,
    MaxPool2D,
    Flatten,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// (height, width); Conv2D and MaxPool2D only.
    pub kernel: Option<(usize, usize)>,
    /// Filters for Conv2D, units for Dense.
    pub filters_or_units: Option<usize>,
    pub padding: Padding,
    pub activation: Activation,
}

impl LayerSpec {
    fn plain(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            kernel: None,
            filters_or_units: None,
            padding: Padding::Valid,
            activation: Activation::None,
        }
    }

    pub fn input() -> Self {
        Self::plain(LayerKind::Input)
    }

    pub fn conv2d(filters: usize, kernel: (usize, usize)) -> Self {
        LayerSpec {
            kernel: Some(kernel),
            filters_or_units: Some(filters),
            ..Self::plain(LayerKind::Conv2D)
        }
    }

    pub fn batch_norm() -> Self {
        Self::plain(LayerKind::BatchNorm)
    }

    /// Max pooling with stride equal to the kernel and `same` padding.
    pub fn max_pool(kernel: (usize, usize)) -> Self {
        LayerSpec {
            kernel: Some(kernel),
            padding: Padding::Same,
            ..Self::plain(LayerKind::MaxPool2D)
        }
    }

    pub fn flatten() -> Self {
        Self::plain(LayerKind::Flatten)
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec {
            filters_or_units: Some(units),
            ..Self::plain(LayerKind::Dense)
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub(crate) fn kernel_or_err(&self) -> Result<(usize, usize)> {
        match self.kernel {
            Some((h, w)) if h >= 1 && w >= 1 => Ok((h, w)),
            other => Err(Error::Shape(format!(
                "{:?} needs a kernel with both sides >= 1, got {other:?}",
                self.kind
            ))),
        }
    }

    pub(crate) fn width_or_err(&self) -> Result<usize> {
        match self.filters_or_units {
            Some(n) if n >= 1 => Ok(n),
            other => Err(Error::Shape(format!(
                "{:?} needs filters/units >= 1, got {other:?}",
                self.kind
            ))),
        }
    }
}

/// The baseline classifier: three Conv-BN-Pool stages and three dense layers.
pub fn baseline_architecture(classes: usize) -> Vec<LayerSpec> {
    use Activation::*;
    vec![
        LayerSpec::input(),
        LayerSpec::conv2d(64, (6, 1)),
        LayerSpec::batch_norm().with_activation(Relu),
        LayerSpec::max_pool((2, 1)),
        LayerSpec::conv2d(64, (3, 1)),
        LayerSpec::batch_norm().with_activation(Relu),
        LayerSpec::max_pool((2, 1)),
        LayerSpec::conv2d(64, (3, 1)),
        LayerSpec::batch_norm().with_activation(Relu),
        LayerSpec::max_pool((2, 1)),
        LayerSpec::flatten(),
        LayerSpec::dense(64).with_activation(Relu),
        LayerSpec::dense(32).with_activation(Relu),
        LayerSpec::dense(classes).with_activation(Softmax),
    ]
}

/// Input shape of the baseline classifier: 75 features laid out along the
/// height axis.
pub const BASELINE_INPUT: [usize; 3] = [75, 1, 1];

fn pooled(input: usize, kernel: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => input.div_ceil(kernel),
        Padding::Valid => {
            if input >= kernel {
                (input - kernel) / kernel + 1
            } else {
                0
            }
        }
    }
}

/// Leading padding applied by a same-padded pooling window.
pub(crate) fn pool_pad_before(input: usize, kernel: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let out = input.div_ceil(kernel);
            (out * kernel).saturating_sub(input) / 2
        }
    }
}

/// Output shape of every layer, per-sample (no batch axis).
pub fn infer_shapes(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
    if layers.first().map(|l| l.kind) != Some(LayerKind::Input) {
        return Err(Error::Shape("layer sequence must begin with Input".into()));
    }
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
    }
    if input_shape.len() != 3 && input_shape.len() != 1 {
        return Err(Error::Shape(format!(
            "input must be (height, width, channels) or (units), got {input_shape:?}"
        )));
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut cur = input_shape.to_vec();
    shapes.push(cur.clone());
    for (idx, layer) in layers.iter().enumerate().skip(1) {
        let spatial = |cur: &[usize]| -> Result<(usize, usize, usize)> {
            match *cur {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(Error::Shape(format!(
                    "layer {idx} ({:?}) needs a rank-3 input, got {cur:?}",
                    layer.kind
                ))),
            }
        };
        cur = match layer.kind {
            LayerKind::Input => {
                return Err(Error::Shape(format!("Input layer at position {idx}")));
            }
            LayerKind::Conv2D => {
                let (h, w, _) = spatial(&cur)?;
                let (kh, kw) = layer.kernel_or_err()?;
                let filters = layer.width_or_err()?;
                if layer.padding != Padding::Valid {
                    return Err(Error::Shape(format!(
                        "layer {idx}: only valid padding is supported for Conv2D"
                    )));
                }
                if kh > h || kw > w {
                    return Err(Error::Shape(format!(
                        "layer {idx}: kernel ({kh},{kw}) larger than input ({h},{w})"
                    )));
                }
                vec![h - kh + 1, w - kw + 1, filters]
            }
            LayerKind::BatchNorm => {
                spatial(&cur)?;
                cur
            }
            LayerKind::MaxPool2D => {
                let (h, w, c) = spatial(&cur)?;
                let (kh, kw) = layer.kernel_or_err()?;
                let oh = pooled(h, kh, layer.padding);
                let ow = pooled(w, kw, layer.padding);
                if oh == 0 || ow == 0 {
                    return Err(Error::Shape(format!(
                        "layer {idx}: pooling ({kh},{kw}) collapses ({h},{w})"
                    )));
                }
                vec![oh, ow, c]
            }
            LayerKind::Flatten => vec![cur.iter().product()],
            LayerKind::Dense => {
                if cur.len() != 1 {
                    return Err(Error::Shape(format!(
                        "layer {idx}: Dense needs a flat input, got {cur:?}"
                    )));
                }
                vec![layer.width_or_err()?]
            }
        };
        shapes.push(cur.clone());
    }
    Ok(shapes)
}

/// Parameter count of one layer given its input shape: (trainable, non-trainable).
pub(crate) fn layer_param_count(layer: &LayerSpec, input: &[usize]) -> (usize, usize) {
    match layer.kind {
        LayerKind::Conv2D => {
            let (kh, kw) = layer.kernel.unwrap_or((1, 1));
            let f = layer.filters_or_units.unwrap_or(0);
            let cin = input.last().copied().unwrap_or(0);
            (f * (kh * kw * cin + 1), 0)
        }
        LayerKind::BatchNorm => {
            let c = input.last().copied().unwrap_or(0);
            (2 * c, 2 * c)
        }
        LayerKind::Dense => {
            let units = layer.filters_or_units.unwrap_or(0);
            let fan_in = input.first().copied().unwrap_or(0);
            (fan_in * units + units, 0)
        }
        LayerKind::Input | LayerKind::MaxPool2D | LayerKind::Flatten => (0, 0),
    }
}

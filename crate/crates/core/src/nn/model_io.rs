//! Model files: a text header line, a JSON manifest, then every parameter and
//! running-statistic tensor as little-endian f32 in layer order.
//!
//! ```text
//! CSOCNN-MODEL <manifest byte length>\n
//! { "format_version": 1, "layers": [...], "tensors": [{"offset": ..}, ..], .. }
//! <blob>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::{LayerParams, Network};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const MAGIC: &str = "CSOCNN-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub class_names: Vec<String>,
    pub scaler_fingerprint: Option<String>,
    pub tensors: Vec<TensorEntry>,
    pub blob_bytes: usize,
    /// Train-mode updates already folded into the batch-norm running statistics.
    #[serde(default)]
    pub bn_updates: u64,
}

/// A network together with the metadata needed to use it on raw records.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub network: Network<f32>,
    pub class_names: Vec<String>,
    pub scaler_fingerprint: Option<String>,
}

pub fn encode_model<T: Scalar>(
    network: &Network<T>,
    class_names: &[String],
    scaler_fingerprint: Option<&str>,
) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (layer, params) in network.params().iter().enumerate() {
        for (name, t) in params.named_tensors() {
            tensors.push(TensorEntry {
                layer,
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: blob.len(),
            });
            for &v in t.data() {
                blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        input_shape: network.input_shape().to_vec(),
        layers: network.layers().to_vec(),
        class_names: class_names.to_vec(),
        scaler_fingerprint: scaler_fingerprint.map(str::to_string),
        tensors,
        blob_bytes: blob.len(),
        bn_updates: network.bn_updates(),
    };
    let text = serde_json::to_vec_pretty(&manifest)?;
    let mut out = format!("{MAGIC} {}\n", text.len()).into_bytes();
    out.extend_from_slice(&text);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelManifest, SavedModel)> {
    let bad = |m: &str| Error::ModelFormat(m.to_string());
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let len: usize = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| bad("bad magic or manifest length"))?;
    let body = &bytes[nl + 1..];
    if body.len() < len {
        return Err(bad("truncated manifest"));
    }
    let manifest: ModelManifest = serde_json::from_slice(&body[..len])
        .map_err(|e| Error::ModelFormat(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let blob = &body[len..];
    if blob.len() != manifest.blob_bytes {
        return Err(Error::ModelFormat(format!(
            "blob is {} bytes, manifest declares {}",
            blob.len(),
            manifest.blob_bytes
        )));
    }

    let template = Network::<f32>::new(manifest.layers.clone(), &manifest.input_shape, 0)
        .map_err(|e| Error::ModelFormat(format!("layers: {e}")))?;
    let mut params: Vec<LayerParams<f32>> = template.params().to_vec();
    let mut seen = 0;
    for (layer, p) in params.iter_mut().enumerate() {
        for (name, t) in p.named_tensors_mut() {
            let entry = manifest
                .tensors
                .iter()
                .find(|e| e.layer == layer && e.name == name)
                .ok_or_else(|| Error::ModelFormat(format!("layer {layer}: missing tensor {name}")))?;
            if entry.shape != t.shape() {
                return Err(Error::ModelFormat(format!(
                    "layer {layer} {name}: shape {:?}, expected {:?}",
                    entry.shape,
                    t.shape()
                )));
            }
            let end = entry.offset + 4 * t.len();
            let raw = blob
                .get(entry.offset..end)
                .ok_or_else(|| Error::ModelFormat(format!("layer {layer} {name}: offset out of range")))?;
            for (dst, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
            seen += 1;
        }
    }
    if seen != manifest.tensors.len() {
        return Err(bad("manifest lists tensors the architecture does not have"));
    }
    let mut network = Network::from_parts(manifest.layers.clone(), &manifest.input_shape, params)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    network.set_bn_updates(manifest.bn_updates);
    let model = SavedModel {
        network,
        class_names: manifest.class_names.clone(),
        scaler_fingerprint: manifest.scaler_fingerprint.clone(),
    };
    Ok((manifest, model))
}

pub fn save_model<T: Scalar>(
    path: &Path,
    network: &Network<T>,
    class_names: &[String],
    scaler_fingerprint: Option<&str>,
) -> Result<()> {
    let bytes = encode_model(network, class_names, scaler_fingerprint)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map(|(_, m)| m)
}

impl SavedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, &self.network, &self.class_names, self.scaler_fingerprint.as_deref())
    }
}

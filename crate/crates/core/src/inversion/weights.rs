//! Classifier weights as a flat little-endian `f64` tensor file plus a JSON
//! manifest giving each tensor's name, shape and element offset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Dims, Kernel};
use crate::inversion::ToyClassifier;

pub const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements, not bytes.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub architecture: String,
    pub dtype: String,
    pub input: Dims,
    pub classes: usize,
    pub tensors: Vec<TensorEntry>,
}

const ARCH: &str = "conv-relu-gap-dense-softmax";

impl ToyClassifier {
    /// Returns `(manifest JSON, tensor bytes)`.
    pub fn to_weight_files(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let c = self.dims.channels;
        let conv: Vec<f64> = self.conv.iter().flat_map(|k| k.weights().to_vec()).collect();
        let tensors: [(&str, Vec<usize>, &[f64]); 4] = [
            ("conv.weight", vec![self.filters, c, self.kernel, self.kernel], &conv),
            ("conv.bias", vec![self.filters], &self.conv_bias),
            ("dense.weight", vec![self.classes, self.filters], &self.dense),
            ("dense.bias", vec![self.classes], &self.dense_bias),
        ];
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, shape, data) in tensors {
            entries.push(TensorEntry {
                name: name.to_string(),
                shape,
                offset,
            });
            offset += data.len();
            bytes.extend(data.iter().flat_map(|v| v.to_le_bytes()));
        }
        let manifest = WeightManifest {
            architecture: ARCH.to_string(),
            dtype: DTYPE.to_string(),
            input: self.dims,
            classes: self.classes,
            tensors: entries,
        };
        Ok((serde_json::to_vec_pretty(&manifest)?, bytes))
    }

    pub fn from_weight_files(manifest: &[u8], bytes: &[u8]) -> Result<Self> {
        let m: WeightManifest = serde_json::from_slice(manifest)?;
        if m.architecture != ARCH || m.dtype != DTYPE {
            return Err(Error::domain(format!(
                "unsupported weights: {} / {}",
                m.architecture, m.dtype
            )));
        }
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::format(bytes.len(), "tensor file length is not a multiple of 8"));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = |name: &str| -> Result<(&[usize], &[f64])> {
            let e = m
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::domain(format!("missing tensor {name}")))?;
            let len: usize = e.shape.iter().product();
            let end = e.offset + len;
            if end > values.len() {
                return Err(Error::format(e.offset * 8, format!("tensor {name} runs past end of file")));
            }
            Ok((&e.shape, &values[e.offset..end]))
        };
        let (conv_shape, conv) = tensor("conv.weight")?;
        let [filters, channels, kernel, k2] = conv_shape else {
            return Err(Error::domain("conv.weight must be 4-dimensional"));
        };
        if kernel != k2 || *channels != m.input.channels {
            return Err(Error::domain("conv.weight shape is inconsistent with the input"));
        }
        let (filters, kernel) = (*filters, *kernel);
        let conv = conv
            .chunks_exact(kernel * kernel)
            .map(|w| Kernel::new(kernel, w.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let (_, conv_bias) = tensor("conv.bias")?;
        let (_, dense) = tensor("dense.weight")?;
        let (_, dense_bias) = tensor("dense.bias")?;
        if conv_bias.len() != filters || dense.len() != m.classes * filters || dense_bias.len() != m.classes {
            return Err(Error::domain("tensor shapes disagree with the filter/class counts"));
        }
        Ok(ToyClassifier {
            dims: m.input,
            kernel,
            filters,
            classes: m.classes,
            conv,
            conv_bias: conv_bias.to_vec(),
            dense: dense.to_vec(),
            dense_bias: dense_bias.to_vec(),
        })
    }
}

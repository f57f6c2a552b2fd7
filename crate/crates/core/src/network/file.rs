//! JSON network files and the `KBW1` weight sidecar.
//!
//! ```json
//! {
//!   "model_flavor": "plain",
//!   "input_domain": {"lower": [-1], "upper": [1]},
//!   "domain_mode": "tight",
//!   "layers": [
//!     {"kind": "dense", "weights": [[1.0]], "bias": [0.0], "activation": {"kind": "tanh"}},
//!     {"kind": "dense", "weights": {"file": "w2.kbw"}, "bias": [0.0]}
//!   ],
//!   "final": {"kind": "gaussian_bump", "w3": 1.0}
//! }
//! ```
//!
//! The sidecar holds one matrix: the bytes `KBW1`, `u32` rows, `u32` cols,
//! four reserved bytes, then `rows·cols` little-endian `f64` in row-major order.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DomainMode, FinalTransform, LayerKind, LayerSpec, ModelFlavor, NetworkSpec};
use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::linalg::{ConvKernel, DomainBox, Matrix, SpectrumScaling};

const MAGIC: &[u8; 4] = b"KBW1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsFile {
    Sidecar { file: String },
    Flat { rows: usize, cols: usize, data: Vec<f64> },
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    Dense,
    Conv,
    Pool,
    Heisenberg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvFile {
    pub index_set: Vec<usize>,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub scaling: SpectrumScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub kind: LayerTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tilde: Option<DomainBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainBox>,
}

/// On-disk form of a [`NetworkSpec`]. A `train` section may ride along; it
/// is read by the training harness and ignored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default)]
    pub model_flavor: ModelFlavor,
    pub input_domain: DomainBox,
    #[serde(default)]
    pub domain_mode: DomainMode,
    pub layers: Vec<LayerFile>,
    #[serde(rename = "final")]
    pub final_transform: FinalTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<serde_json::Value>,
}

fn missing(idx: usize, field: &str) -> Error {
    Error::Config(format!("layer {idx}: missing field `{field}`"))
}

fn weights_matrix(w: &WeightsFile, base: Option<&Path>) -> Result<Matrix> {
    match w {
        WeightsFile::Sidecar { file } => {
            let path = match base {
                Some(dir) => dir.join(file),
                None => file.into(),
            };
            read_kbw(&path)
        }
        WeightsFile::Flat { rows, cols, data } => Matrix::from_vec(*rows, *cols, data.clone()),
        WeightsFile::Rows(rows) => Matrix::from_rows(rows),
    }
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the network. Sidecar paths are resolved against `base`.
    pub fn into_spec(self, base: Option<&Path>) -> Result<NetworkSpec> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lf) in self.layers.into_iter().enumerate() {
            let idx = l + 1;
            let mut layer = match lf.kind {
                LayerTag::Dense => {
                    let w = weights_matrix(lf.weights.as_ref().ok_or_else(|| missing(idx, "weights"))?, base)?;
                    let bias = lf.bias.unwrap_or_else(|| vec![0.0; w.rows()]);
                    LayerSpec::dense(w, bias, lf.activation)
                }
                LayerTag::Conv => {
                    let cf = lf.conv.ok_or_else(|| missing(idx, "conv"))?;
                    let mut layer = LayerSpec::conv(ConvKernel::new(cf.index_set, cf.theta)?, lf.activation);
                    if let LayerKind::Conv { scaling, .. } = &mut layer.kind {
                        *scaling = cf.scaling;
                    }
                    layer
                }
                LayerTag::Pool => {
                    if lf.activation.is_some() {
                        return Err(Error::Config(format!("layer {idx}: pool layers take no activation")));
                    }
                    LayerSpec::pool(lf.pool_size.ok_or_else(|| missing(idx, "pool_size"))?)
                }
                LayerTag::Heisenberg => {
                    let a = lf.a.ok_or_else(|| missing(idx, "a"))?;
                    let b = lf.b.unwrap_or_else(|| vec![0.0; a.len()]);
                    LayerSpec::heisenberg(a, b, lf.c.unwrap_or(0.0), lf.activation)
                }
            };
            layer.domain_tilde = lf.domain_tilde;
            layer.domain = lf.domain;
            layers.push(layer);
        }
        NetworkSpec::new(self.model_flavor, self.input_domain, layers, self.final_transform, self.domain_mode)
    }

    /// Inline-weight file for an existing network (boxes are not written back).
    pub fn from_spec(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|layer| {
                let mut lf = LayerFile {
                    kind: LayerTag::Dense,
                    weights: None,
                    bias: None,
                    activation: layer.activation,
                    pool_size: None,
                    conv: None,
                    a: None,
                    b: None,
                    c: None,
                    domain_tilde: None,
                    domain: None,
                };
                match &layer.kind {
                    LayerKind::Dense { weights, bias } => {
                        lf.weights = Some(WeightsFile::Flat {
                            rows: weights.rows(),
                            cols: weights.cols(),
                            data: weights.as_slice().to_vec(),
                        });
                        lf.bias = Some(bias.clone());
                    }
                    LayerKind::Conv { kernel, scaling } => {
                        lf.kind = LayerTag::Conv;
                        lf.conv = Some(ConvFile {
                            index_set: kernel.shape.clone(),
                            theta: kernel.values.clone(),
                            scaling: *scaling,
                        });
                    }
                    LayerKind::Pool { pool_size } => {
                        lf.kind = LayerTag::Pool;
                        lf.pool_size = Some(*pool_size);
                    }
                    LayerKind::Heisenberg { a, b, c } => {
                        lf.kind = LayerTag::Heisenberg;
                        lf.a = Some(a.clone());
                        lf.b = Some(b.clone());
                        lf.c = Some(*c);
                    }
                }
                lf
            })
            .collect();
        SpecFile {
            model_flavor: spec.model_flavor,
            input_domain: spec.input_domain.clone(),
            domain_mode: spec.domain_mode,
            layers,
            final_transform: spec.final_transform.clone(),
            train: None,
        }
    }
}

impl NetworkSpec {
    /// Reads a JSON network file; sidecars are resolved next to it.
    pub fn load(path: &Path) -> Result<NetworkSpec> {
        let text = fs::read_to_string(path)?;
        SpecFile::from_json(&text)?.into_spec(path.parent())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecFile::from_spec(self))?)
    }
}

pub fn write_kbw(path: &Path, m: &Matrix) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Dimension("too many rows for KBW1".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Dimension("too many columns for KBW1".into()))?;
    let mut out = Vec::with_capacity(16 + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_kbw(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Config(format!("{}: not a KBW1 weight file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(4), word(8));
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(Error::Config(format!(
            "{}: header says {rows}x{cols} but the body holds {} bytes",
            path.display(),
            body.len()
        )));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::from_vec(rows, cols, data)
}

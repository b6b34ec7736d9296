//! CPMF model container.
//!
//! ```text
//! "CPMF"                 4 bytes
//! version                u32 LE (= 1)
//! manifest length        u64 LE
//! manifest               UTF-8 JSON
//! tensor data            f32 LE, row-major, tensors in manifest order
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, ChannelNorm, Conv2D, Dense, Layer, Model, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"CPMF";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    input_shape: Vec<usize>,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerRecord {
    Conv2d {
        padding: Padding,
        activation: Activation,
        params: Vec<TensorRecord>,
    },
    Dense {
        activation: Activation,
        params: Vec<TensorRecord>,
    },
    MaxPool2d,
    Flatten,
    Activation {
        function: Activation,
    },
    Dropout {
        rate: f32,
    },
    ChannelNorm {
        epsilon: f32,
        momentum: f32,
        params: Vec<TensorRecord>,
    },
}

const CONV_PARAMS: [&str; 2] = ["weights", "bias"];
const NORM_PARAMS: [&str; 4] = ["gamma", "beta", "running_mean", "running_var"];

fn records(layer: &Layer, names: &[&str]) -> Vec<TensorRecord> {
    layer
        .params()
        .iter()
        .zip(names)
        .map(|(t, name)| TensorRecord {
            name: (*name).to_string(),
            shape: t.dims().to_vec(),
        })
        .collect()
}

fn manifest_of(model: &Model) -> Manifest {
    let layers = model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Conv2D(c) => LayerRecord::Conv2d {
                padding: c.padding,
                activation: c.activation,
                params: records(layer, &CONV_PARAMS),
            },
            Layer::Dense(d) => LayerRecord::Dense {
                activation: d.activation,
                params: records(layer, &CONV_PARAMS),
            },
            Layer::MaxPool2D => LayerRecord::MaxPool2d,
            Layer::Flatten => LayerRecord::Flatten,
            Layer::Activation(a) => LayerRecord::Activation { function: *a },
            Layer::Dropout { rate } => LayerRecord::Dropout { rate: *rate },
            Layer::ChannelNorm(n) => LayerRecord::ChannelNorm {
                epsilon: n.epsilon,
                momentum: n.momentum,
                params: records(layer, &NORM_PARAMS),
            },
        })
        .collect();
    Manifest {
        input_shape: model.input_shape().dims().to_vec(),
        layers,
    }
}

pub fn write_to(model: &Model, mut out: impl Write) -> std::io::Result<()> {
    let manifest = serde_json::to_vec(&manifest_of(model)).expect("manifest serializes");
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    let mut buf = Vec::new();
    for t in model.params() {
        buf.clear();
        buf.reserve(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_to(model, &mut bytes).expect("writing to memory");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_from(&bytes[..])
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len()
            )));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn tensor(&mut self, record: &TensorRecord) -> Result<Tensor> {
        let n = record
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Shape(format!("tensor {:?} is too large", record.shape)))?;
        let raw = self.take(n, &format!("tensor {:?} {:?}", record.name, record.shape))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(record.shape.clone(), data)
    }
}

fn expect_names(params: &[TensorRecord], names: &[&str]) -> Result<()> {
    let got: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
    if got != names {
        return Err(Error::Shape(format!(
            "expected tensors {names:?}, manifest lists {got:?}"
        )));
    }
    Ok(())
}

/// Parses a CPMF byte stream. Trailing bytes after the last tensor are an
/// error.
pub fn read_from(mut input: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(cur.take(8, "manifest length")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| Error::Format("manifest length overflow".into()))?;
    let manifest: Manifest = serde_json::from_slice(cur.take(len, "manifest")?)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for record in &manifest.layers {
        let layer = match record {
            LayerRecord::Conv2d {
                padding,
                activation,
                params,
            } => {
                expect_names(params, &CONV_PARAMS)?;
                let weights = cur.tensor(&params[0])?;
                let bias = cur.tensor(&params[1])?;
                Layer::Conv2D(Conv2D {
                    weights,
                    bias,
                    padding: *padding,
                    activation: *activation,
                })
            }
            LayerRecord::Dense { activation, params } => {
                expect_names(params, &CONV_PARAMS)?;
                let weights = cur.tensor(&params[0])?;
                let bias = cur.tensor(&params[1])?;
                Layer::Dense(Dense {
                    weights,
                    bias,
                    activation: *activation,
                })
            }
            LayerRecord::MaxPool2d => Layer::MaxPool2D,
            LayerRecord::Flatten => Layer::Flatten,
            LayerRecord::Activation { function } => Layer::Activation(*function),
            LayerRecord::Dropout { rate } => Layer::Dropout { rate: *rate },
            LayerRecord::ChannelNorm {
                epsilon,
                momentum,
                params,
            } => {
                expect_names(params, &NORM_PARAMS)?;
                Layer::ChannelNorm(ChannelNorm {
                    gamma: cur.tensor(&params[0])?,
                    beta: cur.tensor(&params[1])?,
                    running_mean: cur.tensor(&params[2])?,
                    running_var: cur.tensor(&params[3])?,
                    epsilon: *epsilon,
                    momentum: *momentum,
                })
            }
        };
        layers.push(layer);
    }
    if !cur.bytes.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor data",
            cur.bytes.len()
        )));
    }
    Model::new(manifest.input_shape, layers)
}

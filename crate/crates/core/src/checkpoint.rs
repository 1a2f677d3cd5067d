//! Checkpoint file: one JSON header line, then every parameter as a
//! little-endian `f64` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, Layer};
use crate::error::{Error, Result};
use crate::optim::OptimizerHyper;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub encoder: Vec<usize>,
    pub projection: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub dims: Dims,
    pub step_count: usize,
    pub hyper: OptimizerHyper,
}

pub fn encode_checkpoint<F: Scalar>(
    model: &EncoderModel<F>,
    step_count: usize,
    hyper: &OptimizerHyper,
) -> Vec<u8> {
    let header = CheckpointHeader {
        dims: Dims {
            encoder: model.encoder_dims(),
            projection: model.projection_dims(),
        },
        step_count,
        hyper: *hyper,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for v in model.params_flat() {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<(EncoderModel<F>, CheckpointHeader)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Schema {
            line: 1,
            message: "checkpoint header is not newline-terminated".into(),
        })?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Schema {
            line: 1,
            message: e.to_string(),
        })?;
    let body = &bytes[split + 1..];
    let mut model = EncoderModel::<F>::zeros(&header.dims.encoder, &header.dims.projection)?;
    let expected = model.num_params() * 8;
    if body.len() != expected {
        return Err(Error::Size(format!(
            "checkpoint body has {} bytes, dims require {expected}",
            body.len()
        )));
    }
    let values: Vec<F> = body
        .chunks_exact(8)
        .map(|c| F::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    model.set_params_flat(&values)?;
    let layers: Vec<Layer<F>> = model.layers().cloned().collect();
    let n_enc = header.dims.encoder.len() - 1;
    let (enc, proj) = layers.split_at(n_enc);
    // rebuild to reset the cache generation and run the finiteness check
    let model = EncoderModel::from_layers(enc.to_vec(), proj.to_vec())?;
    Ok((model, header))
}

pub fn save_checkpoint<F: Scalar>(
    path: impl AsRef<Path>,
    model: &EncoderModel<F>,
    step_count: usize,
    hyper: &OptimizerHyper,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, step_count, hyper)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<(EncoderModel<F>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

//! Binary parameter checkpoints.
//!
//! ```text
//! "SNNW"            4 bytes
//! version           u32
//! layer count       u32
//! per layer:
//!   kind            u8    1 = conv, 2 = pool, 3 = dense
//!   dim count       u8
//!   dims            u32 × dim count
//!                         conv:  in_c, in_h, in_w, out_c, kernel, has_bias
//!                         pool:  c, h, w, factor
//!                         dense: inputs, outputs, has_bias
//!   payload length  u32   number of f32 values (weights, then bias)
//!   payload         f32 × payload length
//!   crc32           u32   CRC-32 (IEEE) of the payload bytes
//! classifier start  u32
//! alignment layer   u32
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::{ConvLayer, DenseLayer, Layer, PoolLayer, Shape3};
use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SNNW";
pub const VERSION: u32 = 1;

const KIND_CONV: u8 = 1;
const KIND_POOL: u8 = 2;
const KIND_DENSE: u8 = 3;

fn bad<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Format { what: "checkpoint", message: message.into() })
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).or_else(|_| bad(format!("{v} does not fit in u32")))
}

pub fn write_checkpoint<S: Scalar, W: Write>(params: &NetworkParams<S>, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&u32_of(params.layers.len())?.to_le_bytes())?;
    for layer in &params.layers {
        let (kind, dims): (u8, Vec<usize>) = match layer {
            Layer::Conv(c) => (
                KIND_CONV,
                vec![
                    c.input.channels,
                    c.input.height,
                    c.input.width,
                    c.out_channels,
                    c.kernel,
                    usize::from(c.bias.is_some()),
                ],
            ),
            Layer::Pool(p) => (KIND_POOL, vec![p.input.channels, p.input.height, p.input.width, p.factor]),
            Layer::Dense(d) => (KIND_DENSE, vec![d.inputs, d.outputs, usize::from(d.bias.is_some())]),
        };
        out.write_all(&[kind, dims.len() as u8])?;
        for d in dims {
            out.write_all(&u32_of(d)?.to_le_bytes())?;
        }
        let payload: Vec<u8> = layer
            .weights()
            .iter()
            .chain(layer.bias().unwrap_or(&[]))
            .flat_map(|v| (v.as_f64() as f32).to_le_bytes())
            .collect();
        out.write_all(&u32_of(payload.len() / 4)?.to_le_bytes())?;
        out.write_all(&payload)?;
        out.write_all(&crc32fast::hash(&payload).to_le_bytes())?;
    }
    out.write_all(&u32_of(params.classifier_start)?.to_le_bytes())?;
    out.write_all(&u32_of(params.alignment_layer)?.to_le_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut input: R) -> Result<NetworkParams<S>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return bad(format!("bad magic {magic:?}"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return bad(format!("unsupported version {version}"));
    }
    let count = read_u32(&mut input)? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for index in 0..count {
        let kind = read_u8(&mut input)?;
        let ndims = read_u8(&mut input)? as usize;
        let dims = (0..ndims).map(|_| read_u32(&mut input).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let len = read_u32(&mut input)? as usize;
        let mut payload = vec![0u8; len * 4];
        input.read_exact(&mut payload)?;
        let crc = read_u32(&mut input)?;
        if crc != crc32fast::hash(&payload) {
            return bad(format!("CRC mismatch in layer {index}"));
        }
        let values: Vec<S> = payload
            .chunks_exact(4)
            .map(|b| S::of(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))))
            .collect();
        let mut layer = match (kind, dims.as_slice()) {
            (KIND_CONV, &[c, h, w, oc, k, has_bias]) => {
                Layer::Conv(ConvLayer::new(Shape3::new(c, h, w), oc, k, has_bias != 0)?)
            }
            (KIND_POOL, &[c, h, w, f]) => Layer::Pool(PoolLayer::new(Shape3::new(c, h, w), f)?),
            (KIND_DENSE, &[i, o, has_bias]) => Layer::Dense(DenseLayer::new(i, o, has_bias != 0)),
            _ => return bad(format!("layer {index}: unknown kind {kind} with dims {dims:?}")),
        };
        if values.len() != layer.param_count() {
            return bad(format!("layer {index}: {} values for {} parameters", values.len(), layer.param_count()));
        }
        let nw = layer.weights().len();
        layer.weights_mut().copy_from_slice(&values[..nw]);
        if let Some(b) = layer.bias_mut() {
            b.copy_from_slice(&values[nw..]);
        }
        layers.push(layer);
    }
    let classifier_start = read_u32(&mut input)? as usize;
    let alignment_layer = read_u32(&mut input)? as usize;
    NetworkParams::new(layers, classifier_start, alignment_layer)
}

pub fn save_checkpoint<S: Scalar>(params: &NetworkParams<S>, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<NetworkParams<S>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

//! Flat binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "MLRMODEL"   8 bytes
//! version u32         = 1
//! seed    u64
//! input rank u32, dims u64 × rank
//! layer count u32, then per layer: tag u8 + fields
//!   0 Linear  inputs u64, outputs u64, bias u8
//!   1 Conv2d  in u64, out u64, kernel u64, padding u8 (0 valid, 1 same), bias u8
//!   2 Relu    3 MaxPool2d size u64    4 Flatten
//! group count u32, then per group: name len u32 + utf-8 bytes,
//!   tensor count u32, per tensor rank u32 + dims u64 × rank
//! payload: every parameter value as f64, group order, weight before bias
//! ```

use std::fs;
use std::path::Path;

use super::{LayerSpec, Model, ModelSpec, Padding, ParameterGroup, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MLRMODEL";
const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = model.spec();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u64(&mut buf, spec.seed);
    put_u32(&mut buf, spec.input_shape.len() as u32);
    for &d in &spec.input_shape {
        put_u64(&mut buf, d as u64);
    }
    put_u32(&mut buf, spec.layers.len() as u32);
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Linear {
                inputs,
                outputs,
                bias,
            } => {
                buf.push(0);
                put_u64(&mut buf, inputs as u64);
                put_u64(&mut buf, outputs as u64);
                buf.push(bias as u8);
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
                bias,
            } => {
                buf.push(1);
                put_u64(&mut buf, in_channels as u64);
                put_u64(&mut buf, out_channels as u64);
                put_u64(&mut buf, kernel as u64);
                buf.push(matches!(padding, Padding::Same) as u8);
                buf.push(bias as u8);
            }
            LayerSpec::Relu => buf.push(2),
            LayerSpec::MaxPool2d { size } => {
                buf.push(3);
                put_u64(&mut buf, size as u64);
            }
            LayerSpec::Flatten => buf.push(4),
        }
    }
    let groups = model.params().groups();
    put_u32(&mut buf, groups.len() as u32);
    for g in groups {
        put_u32(&mut buf, g.name().len() as u32);
        buf.extend_from_slice(g.name().as_bytes());
        let tensors: Vec<&Tensor> = g.tensors().collect();
        put_u32(&mut buf, tensors.len() as u32);
        for t in tensors {
            put_u32(&mut buf, t.rank() as u32);
            for &d in t.shape() {
                put_u64(&mut buf, d as u64);
            }
        }
    }
    for v in model.params().flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedHeader {
                path: self.path.to_path_buf(),
                reason: format!("header ends early at byte {}", self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::MalformedHeader {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != MAGIC {
        return Err(r.bad("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.bad(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let rank = r.u32()? as usize;
    let input_shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let layer = match r.u8()? {
            0 => LayerSpec::Linear {
                inputs: r.usize()?,
                outputs: r.usize()?,
                bias: r.u8()? != 0,
            },
            1 => LayerSpec::Conv2d {
                in_channels: r.usize()?,
                out_channels: r.usize()?,
                kernel: r.usize()?,
                padding: if r.u8()? != 0 {
                    Padding::Same
                } else {
                    Padding::Valid
                },
                bias: r.u8()? != 0,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool2d { size: r.usize()? },
            4 => LayerSpec::Flatten,
            tag => return Err(r.bad(format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    let mut model = Model::new(ModelSpec {
        input_shape,
        layers,
        seed,
    })
    .map_err(|e| r.bad(e.to_string()))?;

    let n_groups = r.u32()? as usize;
    let mut layout = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let len = r.u32()? as usize;
        let name =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.bad("non-utf8 layer name"))?;
        let n_tensors = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let rank = r.u32()? as usize;
            shapes.push((0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?);
        }
        layout.push((name, shapes));
    }
    let expected_layout: Vec<(String, Vec<Vec<usize>>)> = model
        .params()
        .groups()
        .iter()
        .map(|g| {
            (
                g.name().to_string(),
                g.tensors().map(|t| t.shape().to_vec()).collect(),
            )
        })
        .collect();
    if layout != expected_layout {
        return Err(r.bad("group layout does not match the layer descriptors"));
    }

    let n_values = model.params().num_parameters();
    let payload = &bytes[r.pos..];
    if payload.len() != n_values * 8 {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: n_values * 8,
            found: payload.len(),
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let groups: Vec<ParameterGroup> = model.params().groups().to_vec();
    let mut loaded = Vec::with_capacity(groups.len());
    for mut g in groups {
        for t in g.tensors_mut() {
            for v in t.data_mut() {
                *v = values.next().expect("payload length checked");
                if !v.is_finite() {
                    return Err(r.bad("non-finite parameter value"));
                }
            }
        }
        loaded.push(g);
    }
    model.set_params(Params::from_groups(loaded))?;
    Ok(model)
}

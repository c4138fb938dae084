//! Network checkpoints.
//!
//! Binary layout (version 1, all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes   b"DFNN"
//! version          u32       1
//! output_act       u8        0 = linear, 1 = tanh
//! n_layers         u32
//! shapes           n_layers × (rows u32, cols u32)
//! params           per layer: weight f64 × rows·cols (row-major), bias f64 × rows
//! adam_step        u64
//! adam_first       same layout as params
//! adam_second      same layout as params
//! ```
//!
//! The JSON variant carries the same fields in a self-describing document.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{AdamState, Gradient, Layer, Mlp, NnError, OutputActivation};

const MAGIC: &[u8; 4] = b"DFNN";
pub const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> NnError {
    NnError::Checkpoint(e.to_string())
}

fn write_layers<W: Write>(w: &mut W, layers: &[Layer]) -> std::io::Result<()> {
    for l in layers {
        for v in l.weight.iter().chain(l.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(net: &Mlp, mut w: W) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match net.output_activation() {
        OutputActivation::Linear => 0,
        OutputActivation::Tanh => 1,
    });
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        buf.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
    }
    write_layers(&mut buf, net.layers()).map_err(io_err)?;
    let adam = net.adam_state();
    buf.extend_from_slice(&adam.step.to_le_bytes());
    write_layers(&mut buf, &adam.first.layers).map_err(io_err)?;
    write_layers(&mut buf, &adam.second.layers).map_err(io_err)?;
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(NnError::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn layers(&mut self, shapes: &[(usize, usize)]) -> Result<Vec<Layer>, NnError> {
        shapes
            .iter()
            .map(|&(rows, cols)| {
                let weight = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
                let bias = (0..rows).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
                Ok(Layer {
                    weight: Array2::from_shape_vec((rows, cols), weight).unwrap(),
                    bias: Array1::from(bias),
                })
            })
            .collect()
    }
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Mlp, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let act = match c.take(1)?[0] {
        0 => OutputActivation::Linear,
        1 => OutputActivation::Tanh,
        other => return Err(NnError::Checkpoint(format!("bad activation tag {other}"))),
    };
    let n = c.u32()? as usize;
    let shapes = (0..n)
        .map(|_| Ok((c.u32()? as usize, c.u32()? as usize)))
        .collect::<Result<Vec<_>, NnError>>()?;
    let layers = c.layers(&shapes)?;
    let step = c.u64()?;
    let first = Gradient {
        layers: c.layers(&shapes)?,
    };
    let second = Gradient {
        layers: c.layers(&shapes)?,
    };
    if c.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    let mut net = Mlp::from_layers(layers, act)?;
    net.set_adam_state(AdamState { step, first, second });
    Ok(net)
}

#[derive(Serialize, Deserialize)]
struct JsonCheckpoint {
    version: u32,
    output_activation: OutputActivation,
    layers: Vec<Layer>,
    adam: AdamState,
}

pub fn to_json(net: &Mlp) -> Result<String, NnError> {
    serde_json::to_string(&JsonCheckpoint {
        version: VERSION,
        output_activation: net.output_activation(),
        layers: net.layers().to_vec(),
        adam: net.adam_state().clone(),
    })
    .map_err(|e| NnError::Checkpoint(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Mlp, NnError> {
    let ckpt: JsonCheckpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if ckpt.version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {}", ckpt.version)));
    }
    let mut net = Mlp::from_layers(ckpt.layers, ckpt.output_activation)?;
    net.set_adam_state(ckpt.adam);
    Ok(net)
}

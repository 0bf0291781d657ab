//! Binary checkpoint: a versioned little-endian blob holding every parameter
//! matrix bit-for-bit.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SPINCKPT" | version u32 | step u64 | K u32 | D u32 | tau f64
//! input_dim u32 | n_layers u32 | n_frozen u32
//! per layer: rows u32 | cols u32 | activation u8 | weight f64[rows*cols] | bias f64[rows]
//! projection: rows u32 | cols u32 | has_bias u8 | weight f64[rows*cols] | bias f64[rows]?
//! codebook: f64[K*D]
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AffineBlock, Codebook, EncoderParams, ModelParams, ProjectionParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPINCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        out.extend_from_slice(&self.step.to_le_bytes());
        put_u32(&mut out, p.codebook.k() as u32);
        put_u32(&mut out, p.codebook.dim() as u32);
        put_f64(&mut out, p.codebook.tau);
        put_u32(&mut out, p.encoder.input_dim() as u32);
        put_u32(&mut out, p.encoder.layers.len() as u32);
        put_u32(&mut out, p.encoder.n_frozen as u32);
        for layer in &p.encoder.layers {
            put_u32(&mut out, layer.weight.nrows() as u32);
            put_u32(&mut out, layer.weight.ncols() as u32);
            out.push(layer.activation.code());
            put_all(&mut out, layer.weight.iter());
            put_all(&mut out, layer.bias.iter());
        }
        put_u32(&mut out, p.projection.weight.nrows() as u32);
        put_u32(&mut out, p.projection.weight.ncols() as u32);
        out.push(p.projection.bias.is_some() as u8);
        put_all(&mut out, p.projection.weight.iter());
        if let Some(b) = &p.projection.bias {
            put_all(&mut out, b.iter());
        }
        put_all(&mut out, p.codebook.codewords.iter());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let tau = r.f64()?;
        let input_dim = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        let n_frozen = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let activation = Activation::from_code(r.take(1)?[0])
                .ok_or_else(|| Error::Checkpoint("unknown activation".into()))?;
            let weight = r.matrix(rows, cols)?;
            let bias = Array1::from(r.f64s(rows)?);
            layers.push(AffineBlock {
                weight,
                bias,
                activation,
            });
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let has_bias = r.take(1)?[0] != 0;
        let weight = r.matrix(rows, cols)?;
        let bias = if has_bias {
            Some(Array1::from(r.f64s(rows)?))
        } else {
            None
        };
        let codewords = r.matrix(k, d)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let encoder = EncoderParams::new(input_dim, layers, n_frozen)?;
        // Stored codewords are already on the sphere; re-normalizing here
        // would perturb the low bits and break exact round trips.
        let codebook = Codebook { codewords, tau };
        Ok(Self {
            params: ModelParams {
                encoder,
                projection: ProjectionParams { weight, bias },
                codebook,
            },
            step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_all<'a>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        put_f64(out, *v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
        let data = self.f64s(n)?;
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

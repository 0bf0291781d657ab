//! Binary feature dumps: a 16-byte header (`SPINFEAT`, rows and cols as
//! little-endian u32) followed by row-major little-endian f32 values.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::FrameMatrix;

pub const FEATURE_MAGIC: &[u8; 8] = b"SPINFEAT";
const HEADER_LEN: usize = 16;

pub fn encode_feature_dump(m: &FrameMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_feature_dump(bytes: &[u8]) -> Result<FrameMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::Manifest("feature dump lacks the SPINFEAT header".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * rows * cols {
        return Err(Error::Manifest(format!(
            "feature dump declares {rows}x{cols} values but carries {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn write_feature_dump(path: impl AsRef<Path>, m: &FrameMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_feature_dump(m)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<FrameMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_dump(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_at_single_precision() {
        let m = array![[1.0, -2.5, 3.25], [0.1, 1e-3, 7.0]];
        let bytes = encode_feature_dump(&m);
        assert_eq!(bytes.len(), 16 + 4 * 6);
        let back = decode_feature_dump(&bytes).unwrap();
        assert_eq!(back.dim(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn truncated_or_foreign_bytes_are_rejected() {
        let m = array![[1.0, 2.0]];
        let bytes = encode_feature_dump(&m);
        assert!(decode_feature_dump(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_feature_dump(b"NOTFEATS\0\0\0\0\0\0\0\0").is_err());
    }
}

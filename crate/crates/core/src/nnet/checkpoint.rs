//! Detector checkpoint file.
//!
//! ```text
//! "SPNN" | version u16 | dtype u8 (0 = fp32, 1 = fp64) | n_dims u8 | n_dims x u32
//! W_1 | b_1 | ... | W_L | b_L | w | b        (row-major, little-endian)
//! ```

use std::fs;
use std::path::Path;

use super::{Dtype, MlpParams, Scalar};
use crate::error::{Error, Result};
use crate::synthgen::io::write_atomic;

pub const MAGIC: &[u8; 4] = b"SPNN";
pub const VERSION: u16 = 1;

fn dtype_code(d: Dtype) -> u8 {
    match d {
        Dtype::Fp32 => 0,
        Dtype::Fp64 => 1,
    }
}

pub fn encode<T: Scalar>(params: &MlpParams<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(dtype_code(T::DTYPE));
    buf.push(params.layer_dims.len() as u8);
    for &d in &params.layer_dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (w, b) in params.weights.iter().zip(&params.biases) {
        w.iter().for_each(|v| v.put_le(&mut buf));
        b.iter().for_each(|v| v.put_le(&mut buf));
    }
    params.head_w.iter().for_each(|v| v.put_le(&mut buf));
    params.head_b.put_le(&mut buf);
    buf
}

/// Reads the header only: dtype and layer dims.
pub fn peek_header(bytes: &[u8]) -> Result<(Dtype, Vec<usize>, usize)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dtype = match bytes[6] {
        0 => Dtype::Fp32,
        1 => Dtype::Fp64,
        d => return Err(Error::Format(format!("unknown dtype code {d}"))),
    };
    let n = bytes[7] as usize;
    let end = 8 + 4 * n;
    let raw = bytes
        .get(8..end)
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let dims = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    Ok((dtype, dims, end))
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<MlpParams<T>> {
    let (dtype, dims, mut pos) = peek_header(bytes)?;
    if dtype != T::DTYPE {
        return Err(Error::Format(format!("checkpoint is {dtype:?}, expected {:?}", T::DTYPE)));
    }
    if dims.len() < 2 {
        return Err(Error::Format("checkpoint needs at least two dims".into()));
    }
    let mut take = |n: usize| -> Result<Vec<T>> {
        let end = pos + n * T::BYTES;
        let raw = bytes
            .get(pos..end)
            .ok_or_else(|| Error::Format("truncated checkpoint tensor".into()))?;
        pos = end;
        Ok(raw.chunks_exact(T::BYTES).map(T::get_le).collect())
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in dims.windows(2) {
        weights.push(take(pair[0] * pair[1])?);
        biases.push(take(pair[1])?);
    }
    let head_w = take(*dims.last().expect("len >= 2"))?;
    let head_b = take(1)?[0];
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(MlpParams {
        layer_dims: dims,
        weights,
        biases,
        head_w,
        head_b,
    })
}

pub fn save<T: Scalar>(path: &Path, params: &MlpParams<T>) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load<T: Scalar>(path: &Path) -> Result<MlpParams<T>> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint of either dtype, widening fp32 to fp64.
pub fn load_any(path: &Path) -> Result<MlpParams<f64>> {
    let bytes = fs::read(path)?;
    match peek_header(&bytes)?.0 {
        Dtype::Fp64 => decode::<f64>(&bytes),
        Dtype::Fp32 => Ok(decode::<f32>(&bytes)?.cast()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_bit_exact(seed in any::<u64>(), d1 in 1usize..9, d2 in 1usize..6) {
            let p = MlpParams::<f64>::init(&[7, d1, d2], seed).unwrap();
            let back: MlpParams<f64> = decode(&encode(&p)).unwrap();
            prop_assert_eq!(&back, &p);
            let q: MlpParams<f32> = p.cast();
            let back32: MlpParams<f32> = decode(&encode(&q)).unwrap();
            prop_assert_eq!(back32, q);
        }
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let p = MlpParams::<f64>::init(&[3, 2], 0).unwrap();
        let bytes = encode(&p);
        assert!(decode::<f32>(&bytes).is_err());
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(&bytes[..4], b"SPNN");
    }
}

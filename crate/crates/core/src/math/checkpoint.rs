//! Binary model checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic        8 bytes  "MUKIMLP\0"
//! version      u32      FORMAT_VERSION
//! act_len      u32      byte length of the activation name
//! activation   act_len  UTF-8
//! dropout      f64
//! n_dims       u32
//! dims         n_dims × u64
//! per layer l  weights (dims[l+1] × dims[l]) f64 row-major, then bias dims[l+1] × f64
//! ```

use std::fs;
use std::path::Path;

use super::matrix::DenseMatrix;
use super::mlp::{Activation, Layer, MlpModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MUKIMLP\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let act = model.activation().name().as_bytes();
    out.extend_from_slice(&(act.len() as u32).to_le_bytes());
    out.extend_from_slice(act);
    out.extend_from_slice(&model.dropout_rate().to_le_bytes());
    out.extend_from_slice(&(model.layer_dims().len() as u32).to_le_bytes());
    for &d in model.layer_dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for tensor in model.params() {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let act_len = r.u32()? as usize;
    let act = std::str::from_utf8(r.take(act_len)?).map_err(|e| Error::Checkpoint(format!("activation name: {e}")))?;
    let activation: Activation = act.parse()?;
    let dropout = r.f64()?;
    let n_dims = r.u32()? as usize;
    if n_dims < 2 {
        return Err(Error::Checkpoint(format!("{n_dims} layer dims")));
    }
    let dims = (0..n_dims)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let n = fan_in
            .checked_mul(fan_out)
            .ok_or_else(|| Error::Checkpoint("layer size overflows".into()))?;
        let weights = DenseMatrix::from_vec(fan_out, fan_in, r.f64s(n)?)?;
        let bias = r.f64s(fan_out)?;
        layers.push(Layer { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    MlpModel::from_layers(layers, dropout, activation)
}

pub fn save(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::RngStream;

    #[test]
    fn round_trip_is_bitwise() {
        let m = MlpModel::new(&[6, 5, 4, 3], 0.1, &mut RngStream::new(42, 0)).unwrap();
        let bytes = encode(&m);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let m = MlpModel::new(&[2, 2], 0.0, &mut RngStream::new(1, 0)).unwrap();
        let bytes = encode(&m);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());

        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        assert!(decode(&bad_version).is_err());

        assert!(decode(&bytes[..bytes.len() - 3]).is_err());

        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn header_layout_is_fixed() {
        let m = MlpModel::new(&[3, 2], 0.25, &mut RngStream::new(1, 0)).unwrap();
        let b = encode(&m);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(&b[16..20], b"relu");
        assert_eq!(f64::from_le_bytes(b[20..28].try_into().unwrap()), 0.25);
        assert_eq!(u32::from_le_bytes(b[28..32].try_into().unwrap()), 2);
        // header + dims + 3·2 weights + 2 biases
        assert_eq!(b.len(), 32 + 16 + 8 * 8);
    }
}

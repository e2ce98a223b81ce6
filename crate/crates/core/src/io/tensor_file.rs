//! The `TTR1` binary tensor format.
//!
//! Layout: magic `TTR1`, `u8` version (1), `u8` order `M`, `M` little-endian
//! `u64` dims, then `∏dims` little-endian `f64` values in generalized
//! column-major order.

use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"TTR1";
pub const VERSION: u8 = 1;

pub fn encode(t: &DenseTensor) -> Result<Vec<u8>> {
    let order = u8::try_from(t.order()).map_err(|_| Error::Format(format!("order {} exceeds 255", t.order())))?;
    let mut out = Vec::with_capacity(6 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(order);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<DenseTensor> {
    let bad = |msg: &str| Error::Format(format!("TTR1: {}", msg));
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    let order = bytes[5] as usize;
    let header = 6 + 8 * order;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let mut dims = Vec::with_capacity(order);
    let mut count: usize = 1;
    for chunk in bytes[6..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        let d = usize::try_from(d).map_err(|_| bad("dimension overflows usize"))?;
        count = count.checked_mul(d).ok_or_else(|| bad("element count overflows"))?;
        dims.push(d);
    }
    let expected = count.checked_mul(8).and_then(|b| b.checked_add(header)).ok_or_else(|| bad("payload size overflows"))?;
    if bytes.len() != expected {
        return Err(bad(&format!("payload is {} bytes, expected {}", bytes.len() - header, expected - header)));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseTensor::new(dims, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    write_atomic(path, &encode(t)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = DenseTensor::new(vec![2, 1], vec![1.5, -0.0]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..6], b"TTR1\x01\x02");
        assert_eq!(u64::from_le_bytes(b[6..14].try_into().unwrap()), 2);
        assert_eq!(b.len(), 6 + 16 + 16);
        let back = decode(&b).unwrap();
        assert_eq!(back.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_trailing_bytes() {
        let t = DenseTensor::new(vec![1, 1], vec![1.0]).unwrap();
        let mut b = encode(&t).unwrap();
        b.push(0);
        assert!(decode(&b).is_err());
        b.truncate(b.len() - 2);
        assert!(decode(&b).is_err());
    }
}

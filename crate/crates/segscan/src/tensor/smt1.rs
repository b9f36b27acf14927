//! A tiny binary tensor format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "SMT1"
//! dtype   u8       0 = f32, 1 = f64
//! rank    u8
//! dims    rank x u32
//! data    numel x dtype-size bytes
//! ```
//!
//! Readers reject wrong magic, wrong dtype, truncated or oversized payloads,
//! and dimension products that do not fit the payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::real::{Dtype, Real};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SMT1";

/// Serializes a tensor to the in-memory byte layout.
pub fn encode<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::format(format!("rank {} exceeds format limit", t.rank())));
    }
    let mut out = Vec::with_capacity(4 + 2 + 4 * t.rank() + t.numel() * T::DTYPE.size_bytes());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        let d32 = u32::try_from(d)
            .map_err(|_| Error::format(format!("dimension {d} exceeds u32 range")))?;
        out.extend_from_slice(&d32.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

/// Parses the byte layout produced by [`encode`].
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 6 {
        return Err(Error::format("tensor file shorter than its header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format("bad magic; not an SMT1 tensor file"));
    }
    let dtype = Dtype::from_code(bytes[4])?;
    if dtype != T::DTYPE {
        return Err(Error::format(format!(
            "dtype mismatch: file holds {dtype:?}, reader wants {:?}",
            T::DTYPE
        )));
    }
    let rank = bytes[5] as usize;
    let dims_end = 6 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(Error::format("tensor file truncated inside dims"));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let at = 6 + 4 * i;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        shape.push(d);
    }
    let numel: usize = shape.iter().product();
    let esz = T::DTYPE.size_bytes();
    let want = dims_end + numel * esz;
    if bytes.len() != want {
        return Err(Error::format(format!(
            "payload length {} does not match shape {:?} ({} bytes expected)",
            bytes.len() - dims_end,
            shape,
            numel * esz
        )));
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        let at = dims_end + i * esz;
        data.push(T::read_le(&bytes[at..at + esz]));
    }
    Tensor::from_vec(&shape, data)
}

/// Writes a tensor to `path` in SMT1 layout.
pub fn write_tensor<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    std::fs::write(path, encode(t)?)?;
    Ok(())
}

/// Reads a tensor of element type `T` from `path`.
pub fn read_tensor<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise_for_both_dtypes() {
        let t32 = Tensor::from_vec(&[2, 3], vec![1.5f32, -0.25, 3.0e-7, 1.0e8, 0.0, -1.0]).unwrap();
        let back32: Tensor<f32> = decode(&encode(&t32).unwrap()).unwrap();
        assert_eq!(back32.shape(), t32.shape());
        assert_eq!(back32.data(), t32.data());

        let t64 =
            Tensor::from_vec(&[1, 2, 2], vec![std::f64::consts::PI, -1.0e-300, 7.0, 2.5]).unwrap();
        let back64: Tensor<f64> = decode(&encode(&t64).unwrap()).unwrap();
        assert_eq!(back64.data(), t64.data());
    }

    #[test]
    fn header_layout_is_stable() {
        let t = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let bytes = encode(&t).unwrap();
        assert_eq!(&bytes[..4], b"SMT1");
        assert_eq!(bytes[4], 0); // f32
        assert_eq!(bytes[5], 1); // rank
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 10 + 2 * 4);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let good = encode(&t).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode::<f32>(&bad_magic), Err(Error::Format(_))));

        // Reading f32 data as f64 must fail loudly.
        assert!(matches!(decode::<f64>(&good), Err(Error::Format(_))));

        let truncated = &good[..good.len() - 1];
        assert!(matches!(decode::<f32>(truncated), Err(Error::Format(_))));

        let mut oversized = good.clone();
        oversized.push(0);
        assert!(matches!(decode::<f32>(&oversized), Err(Error::Format(_))));

        let mut bad_dtype = good;
        bad_dtype[4] = 9;
        assert!(matches!(decode::<f32>(&bad_dtype), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.smt1");
        let t = Tensor::from_vec(&[3, 1, 2], vec![0.5f64; 6]).unwrap();
        write_tensor(&path, &t).unwrap();
        let back: Tensor<f64> = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.data(), t.data());
    }
}

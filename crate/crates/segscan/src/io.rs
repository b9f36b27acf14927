//! Minimal binary image I/O: PPM (P6) for color images, PGM (P5) for label
//! masks and heat maps. Both formats round-trip byte-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Writes a `[3,H,W]` image with values in `[0,1]` as a binary PPM,
/// quantized to 8 bits.
pub fn write_ppm<T: Real>(path: &Path, img: &Tensor<T>) -> Result<()> {
    let dims = img.shape();
    let [c, h, w] = dims else {
        return Err(Error::shape(format!("ppm wants [3,H,W], got {dims:?}")));
    };
    if *c != 3 {
        return Err(Error::shape(format!("ppm wants 3 channels, got {c}")));
    }
    let (h, w) = (*h, *w);
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    let data = img.data();
    let plane = h * w;
    for s in 0..plane {
        for ch in 0..3 {
            bytes.push(quantize(data[ch * plane + s]));
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PPM into a `[3,H,W]` tensor scaled to `[0,1]`.
pub fn read_ppm<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path)?;
    let (w, h, payload) = parse_header(&bytes, b"P6")?;
    if payload.len() != 3 * w * h {
        return Err(Error::format(format!(
            "ppm payload {} bytes, want {}",
            payload.len(),
            3 * w * h
        )));
    }
    let plane = h * w;
    let mut data = vec![T::zero(); 3 * plane];
    for s in 0..plane {
        for ch in 0..3 {
            data[ch * plane + s] = T::of(payload[3 * s + ch] as f64 / 255.0);
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Writes an `H*W` byte map (labels or quantized heat values) as binary PGM.
pub fn write_pgm(path: &Path, values: &[u8], h: usize, w: usize) -> Result<()> {
    if values.len() != h * w {
        return Err(Error::shape(format!(
            "pgm payload {} bytes for {h}x{w}",
            values.len()
        )));
    }
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(values);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PGM; returns `(values, h, w)`.
pub fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let bytes = fs::read(path)?;
    let (w, h, payload) = parse_header(&bytes, b"P5")?;
    if payload.len() != w * h {
        return Err(Error::format(format!(
            "pgm payload {} bytes, want {}",
            payload.len(),
            w * h
        )));
    }
    Ok((payload.to_vec(), h, w))
}

fn quantize<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Parses `magic`, width, height, and maxval 255, tolerating `#` comments
/// and arbitrary whitespace, and returns the raw payload that follows.
fn parse_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(format!(
            "expected {} image",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comment lines.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format("truncated image header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("malformed image header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("malformed image header"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format("missing separator after header")),
    }
    Ok((w, h, &bytes[pos..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};

    #[test]
    fn ppm_round_trip_is_exact_for_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        // Values already on the 8-bit grid survive the round trip exactly.
        let data: Vec<f64> = (0..3 * 4 * 5).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = Tensor::from_vec(&[3, 4, 5], data).unwrap();
        write_ppm(&path, &img).unwrap();
        let back = read_ppm::<f64>(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn arbitrary_values_quantize_to_the_nearest_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img =
            Tensor::<f64>::from_vec(&[3, 2, 2], uniform(&mut seeded(1), 12, -0.2, 1.2)).unwrap();
        write_ppm(&path, &img).unwrap();
        let back = read_ppm::<f64>(&path).unwrap();
        for (&a, &b) in img.data().iter().zip(back.data()) {
            assert!((a.clamp(0.0, 1.0) - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let values: Vec<u8> = (0..6 * 7).map(|i| (i * 37 % 256) as u8).collect();
        write_pgm(&path, &values, 6, 7).unwrap();
        let (back, h, w) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (6, 7));
        assert_eq!(back, values);
    }

    #[test]
    fn header_parsing_rejects_corruption_and_accepts_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        fs::write(&path, b"P5\n# a comment\n2 2\n255\nabcd").unwrap();
        let (v, h, w) = read_pgm(&path).unwrap();
        assert_eq!((v, h, w), (b"abcd".to_vec(), 2, 2));

        fs::write(&path, b"P5\n2 2\n255\nab").unwrap();
        assert!(read_pgm(&path).is_err());
        fs::write(&path, b"P6\n2 2\n255\nabcd").unwrap();
        assert!(read_pgm(&path).is_err());
        fs::write(&path, b"P5\n2 2\n16\nabcd").unwrap();
        assert!(read_pgm(&path).is_err());
    }
}

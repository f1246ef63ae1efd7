use std::path::Path;

use crate::binio::{put_u32, put_u64, read_file, write_file, Reader};
use crate::seqcore::SeqTensor;
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"MSBF";
const VERSION: u32 = 1;

/// `[T × D]` per-frame features.
pub type FeatureSequence = SeqTensor;

/// Header (`MSBF`, version, `T`, `D`) followed by `T·D` little-endian
/// `f32` values in frame-major order.
pub fn encode_features(x: &FeatureSequence) -> Result<Vec<u8>> {
    if x.rank() != 2 {
        return Err(Error::invalid(
            "save_features",
            format!("expected [T × D], got {:?}", x.shape()),
        ));
    }
    let (t, d) = (x.rows(), x.cols());
    if t == 0 || d == 0 {
        return Err(Error::EmptyInput {
            op: "save_features",
        });
    }
    if let Some(index) = x.data().iter().position(|v| !(*v as f32).is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut out = Vec::with_capacity(24 + 4 * x.len());
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, t as u64);
    put_u64(&mut out, d as u64);
    for &v in x.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let t = r.len()?;
    let d = r.len()?;
    if t == 0 || d == 0 {
        return Err(Error::EmptyInput {
            op: "load_features",
        });
    }
    let n = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Truncated {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    let payload = r.take(n)?;
    if !r.at_end() {
        return Err(Error::invalid(
            "load_features",
            format!("{} trailing bytes after the payload", bytes.len() - 24 - n),
        ));
    }
    let mut data = Vec::with_capacity(t * d);
    for (index, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().expect("four bytes"));
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        data.push(f64::from(v));
    }
    SeqTensor::matrix(t, d, data)
}

pub fn save_features(x: &FeatureSequence, path: &Path) -> Result<()> {
    write_file(path, &encode_features(x)?)
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    decode_features(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32() {
        let x = SeqTensor::matrix(7, 3, (0..21).map(|i| (i as f64).sin() * 1e3).collect()).unwrap();
        let bytes = encode_features(&x).unwrap();
        assert_eq!(bytes.len(), 24 + 21 * 4);
        let back = decode_features(&bytes).unwrap();
        for (a, b) in x.data().iter().zip(back.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(encode_features(&back).unwrap(), bytes);
    }

    #[test]
    fn distinct_errors() {
        let x = SeqTensor::matrix(2, 2, vec![1.0; 4]).unwrap();
        let good = encode_features(&x).unwrap();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"NOPE");
        assert!(matches!(
            decode_features(&bad),
            Err(Error::BadMagic { expected, found }) if &expected == b"MSBF" && &found == b"NOPE"
        ));
        assert!(matches!(
            decode_features(&good[..good.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut nan = good.clone();
        nan[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_features(&nan),
            Err(Error::NonFinite { index: 0 })
        ));
        let mut empty = good[..24].to_vec();
        empty[8..16].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(
            decode_features(&empty),
            Err(Error::EmptyInput { .. })
        ));
    }
}

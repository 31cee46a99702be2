//! Precomputed feature files.
//!
//! ```text
//! "DCFT" | version u16 | modality u8 (0 audio, 1 visual) | T u64 | D u64 | T·D × f32
//! ```
//! Little-endian, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureError, FeatureSequence, Modality};
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"DCFT";
pub const FEATURE_VERSION: u16 = 1;

pub fn write_features<T: Scalar, W: Write>(seq: &FeatureSequence<T>, mut w: W) -> Result<(), FeatureError> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&[match seq.modality {
        Modality::Audio => 0u8,
        Modality::Visual => 1u8,
    }])?;
    w.write_all(&(seq.steps() as u64).to_le_bytes())?;
    w.write_all(&(seq.dim() as u64).to_le_bytes())?;
    for &v in seq.data() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<T: Scalar, R: Read>(mut r: R) -> Result<FeatureSequence<T>, FeatureError> {
    let mut header = [0u8; 4 + 2 + 1 + 8 + 8];
    fill(&mut r, &mut header)?;
    if &header[..4] != FEATURE_MAGIC {
        return Err(FeatureError::Format(format!("bad magic {:?}", &header[..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FEATURE_VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let modality = match header[6] {
        0 => Modality::Audio,
        1 => Modality::Visual,
        m => return Err(FeatureError::Format(format!("unknown modality tag {m}"))),
    };
    let steps = u64::from_le_bytes(header[7..15].try_into().expect("8 bytes"));
    let dim = u64::from_le_bytes(header[15..23].try_into().expect("8 bytes"));
    if steps == 0 || dim == 0 {
        return Err(FeatureError::DimMismatch(format!("header declares {steps}x{dim}")));
    }
    let count = steps
        .checked_mul(dim)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| FeatureError::DimMismatch(format!("header declares {steps}x{dim}")))?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() < count * 4 {
        return Err(FeatureError::Truncated);
    }
    if payload.len() > count * 4 {
        return Err(FeatureError::DimMismatch(format!(
            "{} trailing bytes after {steps}x{dim} values",
            payload.len() - count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    FeatureSequence::new(modality, steps as usize, dim as usize, data)
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), FeatureError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => FeatureError::Truncated,
        _ => FeatureError::Io(e),
    })
}

pub fn save_features<T: Scalar>(seq: &FeatureSequence<T>, path: &Path) -> Result<(), FeatureError> {
    write_features(seq, BufWriter::new(File::create(path)?))
}

pub fn load_precomputed_features<T: Scalar>(path: &Path) -> Result<FeatureSequence<T>, FeatureError> {
    read_features(BufReader::new(File::open(path)?))
}

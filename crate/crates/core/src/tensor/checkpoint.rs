//! Binary checkpoint format.
//!
//! ```text
//! "DCKP" | version u16 | count u32 |
//!   per parameter: name_len u32 | name utf-8 | rank u32 | dims u64 × rank | values f64 × numel
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::{ParamStore, Tensor, TensorError};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<(), TensorError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<ParamStore<T>, TensorError> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let rank = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(read_array(&mut r)?) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(T::of(f64::from_le_bytes(read_array(&mut r)?)));
        }
        store.insert(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TensorError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TensorError::Checkpoint("truncated".into()),
        _ => TensorError::Io(e),
    })
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], TensorError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40),
            cols in 1usize..5,
        ) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let data = values[..rows * cols].to_vec();
            let mut store = ParamStore::new();
            store.insert("captioner.w", Tensor::new(vec![rows, cols], data).unwrap());
            store.insert("b", Tensor::scalar(values[0]));
            let mut bytes = Vec::new();
            write_checkpoint(&store, &mut bytes).unwrap();
            let back: ParamStore<f64> = read_checkpoint(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 2);
            for (a, b) in store.iter().zip(back.iter()) {
                prop_assert_eq!(&a.name, &b.name);
                prop_assert_eq!(a.value.shape(), b.value.shape());
                for (x, y) in a.value.data().iter().zip(b.value.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            let mut again = Vec::new();
            write_checkpoint(&back, &mut again).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }

    #[test]
    fn header_layout() {
        let mut store = ParamStore::<f64>::new();
        store.insert("ab", Tensor::vector(vec![1.0]));
        let mut bytes = Vec::new();
        write_checkpoint(&store, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"DCKP");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..10], &1u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &2u32.to_le_bytes());
        assert_eq!(&bytes[14..16], b"ab");
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..28], &1u64.to_le_bytes());
        assert_eq!(&bytes[28..36], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 36);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(
            read_checkpoint::<f64, _>(&b"XXXX\x01\x00\x00\x00\x00\x00"[..]),
            Err(TensorError::Checkpoint(_))
        ));
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let mut bytes = Vec::new();
        write_checkpoint(&store, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = read_checkpoint::<f64, _>(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}

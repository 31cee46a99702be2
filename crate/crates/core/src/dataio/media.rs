//! Raw media containers.
//!
//! ```text
//! audio: "DCAU" | version u16 | S u64 | N_a u64 | frame_rate f32 | S·N_a × f32   (row-major, bin-major)
//! video: "DCVI" | version u16 | N_v u64 | C u64 | H u64 | W u64 | fps f32 | N_v·C·H·W × u8
//! ```
//! Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DataError;
use crate::compression::{AudioFrames, VideoFrames};
use crate::scalar::Scalar;

pub const AUDIO_MAGIC: &[u8; 4] = b"DCAU";
pub const VIDEO_MAGIC: &[u8; 4] = b"DCVI";
pub const MEDIA_VERSION: u16 = 1;

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(DataError::MissingFile(path.to_path_buf())),
        Err(e) => Err(DataError::io(path, e)),
    }
}

fn take<const N: usize, R: Read>(r: &mut R, path: &Path) -> Result<[u8; N], DataError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DataError::Media {
            path: path.to_path_buf(),
            message: "truncated".into(),
        },
        _ => DataError::io(path, e),
    })?;
    Ok(b)
}

fn header<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<(), DataError> {
    let m: [u8; 4] = take(r, path)?;
    if &m != magic {
        return Err(DataError::Media {
            path: path.to_path_buf(),
            message: format!("bad magic {m:?}"),
        });
    }
    let version = u16::from_le_bytes(take(r, path)?);
    if version != MEDIA_VERSION {
        return Err(DataError::Media {
            path: path.to_path_buf(),
            message: format!("unsupported version {version}"),
        });
    }
    Ok(())
}

fn dim<R: Read>(r: &mut R, path: &Path) -> Result<usize, DataError> {
    usize::try_from(u64::from_le_bytes(take(r, path)?)).map_err(|_| DataError::Media {
        path: path.to_path_buf(),
        message: "dimension overflow".into(),
    })
}

pub fn write_audio<T: Scalar>(audio: &AudioFrames<T>, path: &Path) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    w.write_all(AUDIO_MAGIC)?;
    w.write_all(&MEDIA_VERSION.to_le_bytes())?;
    w.write_all(&(audio.bins() as u64).to_le_bytes())?;
    w.write_all(&(audio.frames() as u64).to_le_bytes())?;
    w.write_all(&(audio.frame_rate as f32).to_le_bytes())?;
    for &v in audio.data() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_audio<T: Scalar>(path: &Path) -> Result<AudioFrames<T>, DataError> {
    let mut r = open(path)?;
    header(&mut r, AUDIO_MAGIC, path)?;
    let bins = dim(&mut r, path)?;
    let frames = dim(&mut r, path)?;
    let rate = f32::from_le_bytes(take(&mut r, path)?) as f64;
    let n = bins.checked_mul(frames).ok_or_else(|| DataError::Media {
        path: path.to_path_buf(),
        message: "dimension overflow".into(),
    })?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(T::of(f32::from_le_bytes(take(&mut r, path)?) as f64));
    }
    Ok(AudioFrames::new(bins, frames, data, rate)?)
}

pub fn write_video(video: &VideoFrames, path: &Path) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    w.write_all(VIDEO_MAGIC)?;
    w.write_all(&MEDIA_VERSION.to_le_bytes())?;
    for d in [video.len(), video.channels(), video.height(), video.width()] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(video.fps as f32).to_le_bytes())?;
    for f in video.frames() {
        w.write_all(f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_video(path: &Path) -> Result<VideoFrames, DataError> {
    let mut r = open(path)?;
    header(&mut r, VIDEO_MAGIC, path)?;
    let n = dim(&mut r, path)?;
    let c = dim(&mut r, path)?;
    let h = dim(&mut r, path)?;
    let w = dim(&mut r, path)?;
    let fps = f32::from_le_bytes(take(&mut r, path)?) as f64;
    let size = c * h * w;
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let mut f = vec![0u8; size];
        r.read_exact(&mut f).map_err(|_| DataError::Media {
            path: path.to_path_buf(),
            message: "truncated".into(),
        })?;
        frames.push(f);
    }
    Ok(VideoFrames::new(c, h, w, frames, fps)?)
}

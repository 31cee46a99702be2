//! Frame-count reduction applied before feature extraction.
//!
//! Audio is compressed by spectral pooling along time: each spectral row is
//! transformed with a DFT, a DC-centred block of the lowest-frequency bins is
//! kept, and an inverse DFT of the shorter length yields the compressed row.
//! Video is compressed by uniform frame down-sampling.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("compression rate must lie in (0, 1], got {0}")]
    InvalidRate(f64),
    #[error("audio frames: {0}")]
    MalformedAudio(String),
    #[error("video frames: {0}")]
    MalformedVideo(String),
    #[error("spectral pooling left an imaginary residue of {0:e}")]
    ImaginaryResidue(f64),
}

/// Fraction of frames retained, `0 < k <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CompressionRate(f64);

impl CompressionRate {
    pub const FULL: CompressionRate = CompressionRate(1.0);

    pub fn new(k: f64) -> Result<Self, CompressionError> {
        if k.is_finite() && k > 0.0 && k <= 1.0 {
            Ok(Self(k))
        } else {
            Err(CompressionError::InvalidRate(k))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_full(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for CompressionRate {
    type Error = CompressionError;

    fn try_from(k: f64) -> Result<Self, Self::Error> {
        Self::new(k)
    }
}

impl From<CompressionRate> for f64 {
    fn from(k: CompressionRate) -> f64 {
        k.0
    }
}

impl std::fmt::Display for CompressionRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

// Absorbs representation error in products such as 0.6 * 5.
const ROUNDING_SLACK: f64 = 1e-9;

/// `max(1, round_half_up(k * n))`.
pub fn compressed_length(n: usize, k: CompressionRate) -> usize {
    let m = (k.get() * n as f64 + 0.5 + ROUNDING_SLACK).floor() as usize;
    m.clamp(1, n.max(1))
}

/// Spectral-feature matrix of one clip: `bins` rows by `frames` columns,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrames<T> {
    bins: usize,
    frames: usize,
    data: Vec<T>,
    pub frame_rate: f64,
}

impl<T: Scalar> AudioFrames<T> {
    pub fn new(bins: usize, frames: usize, data: Vec<T>, frame_rate: f64) -> Result<Self, CompressionError> {
        if bins == 0 || frames == 0 {
            return Err(CompressionError::MalformedAudio(format!(
                "empty {bins}x{frames} matrix"
            )));
        }
        if data.len() != bins * frames {
            return Err(CompressionError::MalformedAudio(format!(
                "{} values for a {bins}x{frames} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CompressionError::MalformedAudio("non-finite value".into()));
        }
        Ok(Self {
            bins,
            frames,
            data,
            frame_rate,
        })
    }

    /// Spectral dimension `S`.
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Frame count `N_a`.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, bin: usize) -> &[T] {
        &self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn at(&self, bin: usize, frame: usize) -> T {
        self.data[bin * self.frames + frame]
    }

    pub fn cast<U: Scalar>(&self) -> AudioFrames<U> {
        AudioFrames {
            bins: self.bins,
            frames: self.frames,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            frame_rate: self.frame_rate,
        }
    }
}

/// `N_v` frames of `channels × height × width` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrames {
    channels: usize,
    height: usize,
    width: usize,
    frames: Vec<Vec<u8>>,
    pub fps: f64,
}

impl VideoFrames {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        frames: Vec<Vec<u8>>,
        fps: f64,
    ) -> Result<Self, CompressionError> {
        if frames.is_empty() {
            return Err(CompressionError::MalformedVideo("no frames".into()));
        }
        let size = channels * height * width;
        if size == 0 {
            return Err(CompressionError::MalformedVideo("zero-sized frame".into()));
        }
        if let Some(i) = frames.iter().position(|f| f.len() != size) {
            return Err(CompressionError::MalformedVideo(format!(
                "frame {i} has {} bytes, expected {size}",
                frames[i].len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            frames,
            fps,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }
}

/// Signed frequencies kept by a DC-centred crop of `m` bins. For even `m` the
/// extra bin sits on the negative side.
fn retained_frequencies(m: usize) -> impl Iterator<Item = isize> {
    let m = m as isize;
    let lo = -(m / 2);
    lo..lo + m
}

/// Compresses every spectral row from `N_a` to `compressed_length(N_a, k)`
/// frames by keeping the lowest DFT bins.
///
/// Retained bins are scaled by `M/N_a` so a constant row keeps its level.
/// When `M` is even and smaller than `N_a`, the lone bin at `-M/2` becomes the
/// Nyquist bin of the short transform; it is replaced by its real part (the
/// mean of the `±M/2` pair of a real signal) so the inverse is real.
pub fn spectral_pool<T: Scalar>(
    audio: &AudioFrames<T>,
    k: CompressionRate,
) -> Result<AudioFrames<T>, CompressionError> {
    let n = audio.frames;
    let m = compressed_length(n, k);

    let mut planner = FftPlanner::<T>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(m);
    let norm = T::one() / T::of(n as f64);
    let nyquist = m.is_multiple_of(2).then_some(m / 2);

    let mut spectrum = vec![Complex::new(T::zero(), T::zero()); n];
    let mut cropped = vec![Complex::new(T::zero(), T::zero()); m];
    let mut scratch = vec![
        Complex::new(T::zero(), T::zero());
        forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())
    ];
    let mut out = Vec::with_capacity(audio.bins * m);
    let mut residue = T::zero();
    let mut magnitude = T::one();

    for row in audio.data.chunks_exact(n) {
        for (c, &x) in spectrum.iter_mut().zip(row) {
            *c = Complex::new(x, T::zero());
            magnitude = magnitude.max(x.abs());
        }
        forward.process_with_scratch(&mut spectrum, &mut scratch);
        for f in retained_frequencies(m) {
            let src = f.rem_euclid(n as isize) as usize;
            let dst = f.rem_euclid(m as isize) as usize;
            cropped[dst] = spectrum[src];
        }
        if let Some(ny) = nyquist {
            cropped[ny] = Complex::new(cropped[ny].re, T::zero());
        }
        inverse.process_with_scratch(&mut cropped, &mut scratch);
        for c in &cropped {
            residue = residue.max((c.im * norm).abs());
            out.push(c.re * norm);
        }
    }

    if residue > T::consistency_tol() * magnitude {
        return Err(CompressionError::ImaginaryResidue(residue.as_f64()));
    }
    Ok(AudioFrames {
        bins: audio.bins,
        frames: m,
        data: out,
        frame_rate: audio.frame_rate * m as f64 / n as f64,
    })
}

/// Source frame indices selected by uniform down-sampling: `floor(m / k)` for
/// `m` in `0..compressed_length(n, k)`, clamped to the last frame.
pub fn downsample_indices(n: usize, k: CompressionRate) -> Vec<usize> {
    let m = compressed_length(n, k);
    (0..m)
        .map(|i| ((i as f64 / k.get() + ROUNDING_SLACK).floor() as usize).min(n - 1))
        .collect()
}

pub fn downsample_frames(video: &VideoFrames, k: CompressionRate) -> VideoFrames {
    let idx = downsample_indices(video.len(), k);
    let m = idx.len();
    VideoFrames {
        channels: video.channels,
        height: video.height,
        width: video.width,
        frames: idx.into_iter().map(|i| video.frames[i].clone()).collect(),
        fps: video.fps * m as f64 / video.frames.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(k: f64) -> CompressionRate {
        CompressionRate::new(k).unwrap()
    }

    #[test]
    fn rate_validation() {
        assert!(CompressionRate::new(0.0).is_err());
        assert!(CompressionRate::new(1.0001).is_err());
        assert!(CompressionRate::new(f64::NAN).is_err());
        assert!(CompressionRate::new(1.0).is_ok());
    }

    #[test]
    fn compressed_length_rule() {
        assert_eq!(compressed_length(10, rate(0.2)), 2);
        assert_eq!(compressed_length(4, rate(1.0)), 4);
        assert_eq!(compressed_length(3, rate(0.1)), 1);
        assert_eq!(compressed_length(5, rate(0.5)), 3);
        assert_eq!(compressed_length(5, rate(0.3)), 2);
    }

    #[test]
    fn downsample_examples() {
        assert_eq!(downsample_indices(10, rate(0.2)), vec![0, 5]);
        assert_eq!(downsample_indices(7, rate(0.4)), vec![0, 2, 5]);
        assert_eq!(downsample_indices(6, rate(1.0)), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn downsample_copies_frames() {
        let frames: Vec<Vec<u8>> = (0..10u8).map(|i| vec![i; 3]).collect();
        let v = VideoFrames::new(3, 1, 1, frames, 25.0).unwrap();
        let d = downsample_frames(&v, rate(0.2));
        assert_eq!(d.frames(), &[vec![0u8; 3], vec![5u8; 3]]);
        assert_eq!(downsample_frames(&v, rate(1.0)), v);
    }

    #[test]
    fn video_shape_validation() {
        let err = VideoFrames::new(1, 2, 2, vec![vec![0; 4], vec![0; 3]], 1.0).unwrap_err();
        assert!(matches!(err, CompressionError::MalformedVideo(_)));
        assert!(VideoFrames::new(1, 2, 2, vec![], 1.0).is_err());
    }

    #[test]
    fn constant_row_keeps_level() {
        let a = AudioFrames::new(1, 4, vec![2.5f64; 4], 100.0).unwrap();
        for k in [0.2, 0.5, 0.75] {
            let p = spectral_pool(&a, rate(k)).unwrap();
            assert_eq!(p.frames(), compressed_length(4, rate(k)));
            for &v in p.data() {
                assert!((v - 2.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hand_case_matches_closed_form() {
        // x = cos(pi n / 2): X[1] = X[3] = 2. M = 2 keeps f in {-1, 0}.
        let a = AudioFrames::new(1, 4, vec![1.0f64, 0.0, -1.0, 0.0], 1.0).unwrap();
        let p = spectral_pool(&a, rate(0.5)).unwrap();
        assert!((p.data()[0] - 0.5).abs() < 1e-12);
        assert!((p.data()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_rate_is_identity() {
        let data: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let a = AudioFrames::new(3, 10, data, 1.0).unwrap();
        let p = spectral_pool(&a, CompressionRate::FULL).unwrap();
        assert_eq!(p.frames(), 10);
        for (x, y) in p.data().iter().zip(a.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn runs_at_single_precision() {
        let a = AudioFrames::new(1, 8, vec![1.0f32; 8], 1.0).unwrap();
        let p = spectral_pool(&a, rate(0.5)).unwrap();
        assert_eq!(p.frames(), 4);
        assert!(p.data().iter().all(|v| (v - 1.0).abs() < 1e-5));
    }
}

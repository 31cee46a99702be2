//! Frozen feature extraction and audio-visual fusion.

mod extractor;
mod file;

pub use extractor::{audio_windows, Extractor, ExtractorConfig, ExtractorKind, AUDIO_STRIDE, AUDIO_WINDOW};
pub use file::{
    load_precomputed_features, read_features, save_features, write_features, FEATURE_MAGIC, FEATURE_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::{
    downsample_frames, spectral_pool, AudioFrames, CompressionError, CompressionRate, VideoFrames,
};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("expected a {expected} extractor, got {found}")]
    WrongModality { expected: Modality, found: Modality },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("feature file format: {0}")]
    Format(String),
    #[error("feature file dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("feature file truncated")]
    Truncated,
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Visual,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `steps × dim` feature matrix of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    pub modality: Modality,
    steps: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureSequence<T> {
    pub fn new(modality: Modality, steps: usize, dim: usize, data: Vec<T>) -> Result<Self, FeatureError> {
        if data.len() != steps * dim {
            return Err(FeatureError::MalformedInput(format!(
                "{} values for {steps}x{dim} features",
                data.len()
            )));
        }
        Ok(Self {
            modality,
            steps,
            dim,
            data,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows at `indices`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let data = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            modality: self.modality,
            steps: indices.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![self.steps, self.dim], self.data.clone()).expect("shape checked at construction")
    }
}

/// Fused clip representation: audio latent followed by visual latent.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector<T> {
    data: Vec<T>,
    audio_dim: usize,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(data: Vec<T>, audio_dim: usize) -> Self {
        debug_assert!(audio_dim <= data.len());
        Self { data, audio_dim }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn audio(&self) -> &[T] {
        &self.data[..self.audio_dim]
    }

    pub fn visual(&self) -> &[T] {
        &self.data[self.audio_dim..]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::vector(self.data.clone())
    }
}

/// Mean over time of each modality, audio first.
pub fn pool_and_fuse<T: Scalar>(
    audio: &FeatureSequence<T>,
    visual: &FeatureSequence<T>,
) -> Result<LatentVector<T>, FeatureError> {
    for (seq, expected) in [(audio, Modality::Audio), (visual, Modality::Visual)] {
        if seq.modality != expected {
            return Err(FeatureError::WrongModality {
                expected,
                found: seq.modality,
            });
        }
    }
    let mut tape = Tape::new();
    let a = tape.constant(audio.to_tensor());
    let v = tape.constant(visual.to_tensor());
    let a = tape.mean_over_time(a)?;
    let v = tape.mean_over_time(v)?;
    let fused = tape.concat(a, v)?;
    Ok(LatentVector::new(tape.value(fused).data().to_vec(), audio.dim()))
}

/// Audio and visual extractors sharing one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractors<T> {
    pub audio: Extractor<T>,
    pub visual: Extractor<T>,
}

impl<T: Scalar> Extractors<T> {
    pub fn toy(bins: usize, channels: usize, config: &ExtractorConfig, seed: u64) -> Self {
        Self {
            audio: Extractor::toy_audio(bins, config, seed),
            visual: Extractor::toy_visual(channels, config, seed),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.audio.dim() + self.visual.dim()
    }

    /// Compresses both streams at rate `k` and extracts their features.
    pub fn extract(
        &self,
        audio: &AudioFrames<T>,
        video: &VideoFrames,
        k: CompressionRate,
    ) -> Result<(FeatureSequence<T>, FeatureSequence<T>), FeatureError> {
        let audio = spectral_pool(audio, k)?;
        let video = downsample_frames(video, k);
        Ok((self.audio.extract_audio(&audio)?, self.visual.extract_visual(&video)?))
    }

    /// Compression, extraction, and fusion into one latent vector.
    pub fn latent(
        &self,
        audio: &AudioFrames<T>,
        video: &VideoFrames,
        k: CompressionRate,
    ) -> Result<LatentVector<T>, FeatureError> {
        let (a, v) = self.extract(audio, video, k)?;
        pool_and_fuse(&a, &v)
    }
}

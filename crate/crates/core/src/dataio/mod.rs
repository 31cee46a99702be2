//! Captions, vocabularies, manifests, raw media files and the synthetic
//! toy dataset.

mod manifest;
mod media;
mod tokenize;
mod toy;
mod vocab;

pub use manifest::{load_manifest, parse_manifest, split_samples, write_manifest, VideoSample};
pub use media::{read_audio, read_video, write_audio, write_video, AUDIO_MAGIC, MEDIA_VERSION, VIDEO_MAGIC};
pub use tokenize::{tokenize, tokenize_bytes};
pub use toy::{
    generate_toy_dataset, generate_toy_dataset_with, toy_classes, ToyClasses, ToyShape, COLORS, MANIFEST_NAME,
    PATTERNS, SOUNDS,
};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compression::CompressionError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate video id {0:?}")]
    DuplicateId(String),
    #[error("referenced file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {message}", path.display())]
    Media { path: PathBuf, message: String },
    #[error("invalid text encoding: {0}")]
    Encoding(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Frames(#[from] CompressionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Media {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

//! Teacher-student distillation of fused latent vectors.
//!
//! The teacher captions uncompressed clips. A student sees clips compressed at
//! rate `k`, maps its latent through a small [`Adapter`] into the teacher's
//! latent space and captions from there. Extractors stay frozen throughout, so
//! every latent is computed once and cached.

mod adapter;
mod store;
mod train;

pub use adapter::{rep_loss_on_tape, Adapter, BoundAdapter, ADAPTER_LAYERS};
pub use store::{
    checkpoint_id, load_student, load_teacher, save_student, save_teacher, LossEntry, LossLog, Provenance, StudentMeta,
    TeacherMeta, LOSS_LOG, STUDENT_CHECKPOINT, STUDENT_META, TEACHER_CHECKPOINT, TEACHER_META, VOCAB_FILE,
};
pub use train::{joint_loss_on_tape, train_adapter, train_captioner, train_student, train_teacher, TrainedTeacher};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::captioner::{Captioner, CaptionerError};
use crate::compression::{AudioFrames, CompressionError, CompressionRate, VideoFrames};
use crate::dataio::{tokenize, DataError, VideoSample, Vocabulary};
use crate::features::{Extractors, FeatureError, LatentVector};
use crate::metrics::{evaluate, MetricError, ScoreReport};
use crate::scalar::Scalar;
use crate::tensor::{AdamConfig, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("adapter expects {expected} inputs, got {found}")]
    AdapterInput { expected: usize, found: usize },
    #[error("adapter produces {adapted} values but the teacher latent has {teacher}")]
    LatentMismatch { adapted: usize, teacher: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("teacher checkpoint not found: {}", .0.display())]
    MissingTeacher(PathBuf),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Captioner(#[from] CaptionerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeMode {
    /// Adapter trained on the representation loss alone, then frozen while a
    /// fresh captioner learns from its outputs.
    #[serde(rename = "rep")]
    RepOnly,
    /// Adapter and captioner trained together on `CE + lambda * rep`.
    #[serde(rename = "rep+ce")]
    RepPlusCe,
}

impl RegimeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeMode::RepOnly => "rep",
            RegimeMode::RepPlusCe => "rep+ce",
        }
    }
}

impl std::fmt::Display for RegimeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegimeMode {
    type Err = DistillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rep" | "rep-only" | "rep_only" => Ok(RegimeMode::RepOnly),
            "rep+ce" | "rep-plus-ce" | "rep_plus_ce" => Ok(RegimeMode::RepPlusCe),
            other => Err(DistillError::InvalidRegime(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRegime {
    pub mode: RegimeMode,
    /// Weight of the representation term in joint training. Zero is accepted
    /// and reduces joint training to cross-entropy alone.
    pub lambda_rep: f64,
}

impl TrainRegime {
    pub fn new(mode: RegimeMode, lambda_rep: f64) -> Result<Self, DistillError> {
        let r = Self { mode, lambda_rep };
        r.validate()?;
        Ok(r)
    }

    pub fn rep_only() -> Self {
        Self {
            mode: RegimeMode::RepOnly,
            lambda_rep: 1.0,
        }
    }

    pub fn rep_plus_ce() -> Self {
        Self {
            mode: RegimeMode::RepPlusCe,
            lambda_rep: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if !(self.lambda_rep >= 0.0 && self.lambda_rep.is_finite()) {
            return Err(DistillError::InvalidRegime(format!("lambda_rep {}", self.lambda_rep)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Cross-entropy epochs for the teacher and for every student captioner.
    pub epochs: usize,
    /// Representation-only epochs of the adapter phase.
    pub adapter_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Token budget of greedy decoding at evaluation time.
    pub max_caption_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            adapter_epochs: 60,
            batch_size: 16,
            adam: AdamConfig {
                lr: 5e-3,
                ..AdamConfig::default()
            },
            max_caption_len: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        if self.batch_size == 0 {
            return Err(DistillError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(DistillError::InvalidConfig(format!("learning rate {}", self.adam.lr)));
        }
        Ok(())
    }
}

/// Student with its adapter, the rate its features were compressed at and
/// where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DistilledModel<T> {
    pub adapter: Adapter<T>,
    pub captioner: Captioner<T>,
    pub rate: CompressionRate,
    pub provenance: Provenance,
}

impl<T: Scalar> DistilledModel<T> {
    /// Captions a student latent computed at `self.rate`.
    pub fn generate(&self, student_latent: &LatentVector<T>, max_len: usize) -> Result<Vec<usize>, DistillError> {
        let adapted = self.adapter.forward(student_latent)?;
        Ok(self.captioner.generate(&adapted, max_len)?)
    }
}

/// `BOS … EOS` token ids of every caption of every sample.
pub fn encode_captions(samples: &[VideoSample], vocab: &Vocabulary) -> Vec<Vec<Vec<usize>>> {
    samples
        .iter()
        .map(|s| s.captions.iter().map(|c| vocab.encode(&tokenize(c))).collect())
        .collect()
}

/// Tokenized reference captions of every sample.
pub fn reference_tokens(samples: &[VideoSample]) -> Vec<Vec<Vec<String>>> {
    samples
        .iter()
        .map(|s| s.captions.iter().map(|c| tokenize(c)).collect())
        .collect()
}

/// Vocabulary over the captions of `samples`.
pub fn build_vocabulary(samples: &[VideoSample], min_freq: usize) -> Vocabulary {
    let tokens: Vec<Vec<String>> = samples
        .iter()
        .flat_map(|s| s.captions.iter().map(|c| tokenize(c)))
        .collect();
    Vocabulary::build(tokens.iter(), min_freq)
}

/// Fused latents of `samples` at rate `k`, in order.
pub fn compute_latents<T: Scalar>(
    extractors: &Extractors<T>,
    samples: &[VideoSample],
    k: CompressionRate,
) -> Result<Vec<LatentVector<T>>, DistillError> {
    samples
        .iter()
        .map(|s| {
            let audio = s.load_audio::<T>()?;
            let video = s.load_video()?;
            Ok(extractors.latent(&audio, &video, k)?)
        })
        .collect()
}

/// Representation loss of one clip: the teacher latent comes from the
/// uncompressed frames, the student latent from frames compressed at `k`.
pub fn compute_rep_loss<T: Scalar>(
    extractors: &Extractors<T>,
    adapter: &Adapter<T>,
    audio: &AudioFrames<T>,
    video: &VideoFrames,
    k: CompressionRate,
) -> Result<Tensor<T>, DistillError> {
    let teacher = extractors.latent(audio, video, CompressionRate::FULL)?;
    let student = extractors.latent(audio, video, k)?;
    let mut tape = Tape::new();
    let bound = adapter.bind(&mut tape);
    let s = tape.constant(student.to_tensor());
    let (loss, _) = rep_loss_on_tape(&mut tape, adapter, &bound, s, &teacher)?;
    Ok(tape.value(loss).clone())
}

/// Greedy captions for each latent, as words.
pub fn generate_captions<T: Scalar>(
    captioner: &Captioner<T>,
    latents: &[LatentVector<T>],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<Vec<String>>, DistillError> {
    latents
        .iter()
        .map(|z| Ok(vocab.decode(&captioner.generate(z, max_len)?)))
        .collect()
}

/// Metric report of a captioner over `latents` against tokenized references.
pub fn score_captioner<T: Scalar>(
    captioner: &Captioner<T>,
    latents: &[LatentVector<T>],
    references: &[Vec<Vec<String>>],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<ScoreReport, DistillError> {
    let candidates = generate_captions(captioner, latents, vocab, max_len)?;
    Ok(evaluate(&candidates, references)?)
}

/// Metric report of a student over latents computed at its own rate.
pub fn score_student<T: Scalar>(
    model: &DistilledModel<T>,
    student_latents: &[LatentVector<T>],
    references: &[Vec<Vec<String>>],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<ScoreReport, DistillError> {
    let adapted = student_latents
        .iter()
        .map(|z| model.adapter.forward(z))
        .collect::<Result<Vec<_>, _>>()?;
    score_captioner(&model.captioner, &adapted, references, vocab, max_len)
}

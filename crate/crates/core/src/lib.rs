//! Compressed audio-visual captioning with teacher-student distillation.
//!
//! A teacher captions clips from all of their frames. Students see frames
//! compressed by spectral pooling (audio) and uniform down-sampling (video)
//! and are trained to reproduce the teacher's fused latent vector through a
//! small adapter. Everything numeric is generic over [`Scalar`] (`f32` or
//! `f64`); training and scoring use `f64`.

pub mod bench;
pub mod captioner;
pub mod compression;
pub mod dataio;
pub mod distillation;
pub mod features;
pub mod metrics;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Captioner64 = captioner::Captioner<f64>;
pub type Captioner32 = captioner::Captioner<f32>;
pub type Extractors64 = features::Extractors<f64>;
pub type Extractors32 = features::Extractors<f32>;
pub type Adapter64 = distillation::Adapter<f64>;
pub type DistilledModel64 = distillation::DistilledModel<f64>;

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::compression::{AudioFrames, CompressionRate, VideoFrames};
use crate::dataio::VideoSample;
use crate::features::Extractors;
use crate::scalar::Scalar;

/// Videos processed once and discarded before measuring.
pub const WARMUP_VIDEOS: usize = 2;

/// Per-video wall-clock seconds of compression plus feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub rate: CompressionRate,
    pub n_videos: usize,
    pub repeats: usize,
    pub seconds: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `seconds`.
    pub std: f64,
}

impl TimingRecord {
    pub fn new(rate: CompressionRate, n_videos: usize, repeats: usize, seconds: Vec<f64>) -> Result<Self, BenchError> {
        if repeats == 0 {
            return Err(BenchError::Config("repeats must be at least 1".into()));
        }
        if seconds.len() != n_videos * repeats || seconds.is_empty() {
            return Err(BenchError::Config(format!(
                "{} measurements for {n_videos} videos x {repeats} repeats",
                seconds.len()
            )));
        }
        let n = seconds.len() as f64;
        let mean = seconds.iter().sum::<f64>() / n;
        let std = (seconds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            rate,
            n_videos,
            repeats,
            seconds,
            mean,
            std,
        })
    }
}

/// Media of a seeded random selection of `n_videos` samples, loaded up front
/// so that file I/O stays out of the measurement.
pub fn load_timing_set<T: Scalar>(
    samples: &[VideoSample],
    n_videos: usize,
    seed: u64,
) -> Result<Vec<(AudioFrames<T>, VideoFrames)>, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyManifest);
    }
    let n = n_videos.clamp(1, samples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, samples.len(), n)
        .into_iter()
        .map(|i| Ok((samples[i].load_audio()?, samples[i].load_video()?)))
        .collect()
}

/// Times compression at rate `k` plus extraction and fusion for every clip,
/// `repeats` times, after a warm-up pass over the first clips. Single
/// threaded on one extractor instance.
pub fn time_clips<T: Scalar>(
    clips: &[(AudioFrames<T>, VideoFrames)],
    k: CompressionRate,
    repeats: usize,
    extractors: &Extractors<T>,
) -> Result<TimingRecord, BenchError> {
    if clips.is_empty() {
        return Err(BenchError::EmptyManifest);
    }
    for (audio, video) in clips.iter().take(WARMUP_VIDEOS) {
        std::hint::black_box(extractors.latent(audio, video, k)?);
    }
    let mut seconds = Vec::with_capacity(clips.len() * repeats);
    for _ in 0..repeats {
        for (audio, video) in clips {
            let start = Instant::now();
            std::hint::black_box(extractors.latent(audio, video, k)?);
            seconds.push(start.elapsed().as_secs_f64());
        }
    }
    TimingRecord::new(k, clips.len(), repeats, seconds)
}

/// Loads a seeded selection of `n_videos` clips and times them at rate `k`.
pub fn time_feature_extraction<T: Scalar>(
    samples: &[VideoSample],
    k: CompressionRate,
    repeats: usize,
    n_videos: usize,
    extractors: &Extractors<T>,
    seed: u64,
) -> Result<TimingRecord, BenchError> {
    let clips = load_timing_set(samples, n_videos, seed)?;
    time_clips(&clips, k, repeats, extractors)
}

/// Inference-time reduction in percent, `100 * (teacher - student) / teacher`.
pub fn time_diff_percent(teacher_mean_s: f64, student_mean_s: f64) -> Result<f64, BenchError> {
    if !(teacher_mean_s > 0.0 && teacher_mean_s.is_finite()) {
        return Err(BenchError::NonPositiveTeacherTime(teacher_mean_s));
    }
    Ok(100.0 * (teacher_mean_s - student_mean_s) / teacher_mean_s)
}

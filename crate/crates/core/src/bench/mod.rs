//! Extraction-latency measurement, score and timing tables, and the staged
//! end-to-end experiment.

mod config;
mod pipeline;
mod report;
mod timing;

pub use config::{DatasetConfig, ExperimentConfig, TimingConfig};
pub use pipeline::{
    run_experiment, stage_data, stage_score, stage_students, stage_teacher, stage_timing, student_dir, Pipeline, Split,
    StudentRun, SCORE_JSON, SCORE_TABLE, STUDENTS_DIR, TEACHER_DIR, TIMING_JSON, TIMING_TABLE,
};
pub use report::{ExperimentReport, ScoreRow, ScoreTable, TimingRow, TimingTable, TEACHER_LABEL};
pub use timing::{
    load_timing_set, time_clips, time_diff_percent, time_feature_extraction, TimingRecord, WARMUP_VIDEOS,
};

use thiserror::Error;

use crate::compression::CompressionError;
use crate::dataio::DataError;
use crate::distillation::DistillError;
use crate::features::FeatureError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("manifest has no samples")]
    EmptyManifest,
    #[error("teacher time must be positive, got {0}")]
    NonPositiveTeacherTime(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(BenchError) -> BenchError {
        move |e| match e {
            already @ BenchError::Stage { .. } => already,
            other => BenchError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

//! Caption metrics and the aggregate score.
//!
//! BLEU-1..4 and ROUGE-L lie in `[0, 1]`, CIDEr in `[0, 10]`. The aggregate
//! score averages the mean of the BLEU orders with every other metric that is
//! present; METEOR and SPICE values are honoured when supplied from outside
//! but never computed here.

mod bleu;
mod cider;
mod rouge;

pub use bleu::{bleu_n, corpus_bleu};
pub use cider::{aggregate_cider, cider, cider_terms, CIDER_MAX_N, CIDER_SCALE};
pub use rouge::{corpus_rouge_l, rouge_l, ROUGE_BETA};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BLEU_NAMES: [&str; 4] = ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4"];
pub const CIDER: &str = "CIDEr";
pub const METEOR: &str = "METEOR";
pub const ROUGE_L: &str = "ROUGE-L";
pub const SPICE: &str = "SPICE";

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("video {0} has no references")]
    EmptyReferences(usize),
    #[error("{candidates} candidates but {references} reference sets")]
    CorpusMismatch { candidates: usize, references: usize },
    #[error("BLEU order must be 1..=4, got {0}")]
    InvalidOrder(usize),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("no metrics to aggregate")]
    EmptyReport,
    #[error("teacher value must be positive, got {0}")]
    NonPositiveTeacher(f64),
}

pub(crate) fn check_corpus(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<(), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::CorpusMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(MetricError::EmptyReferences(i));
    }
    Ok(())
}

/// Metric values keyed by name plus the aggregate score. Serialises as one
/// flat object with a key per metric and `SCORE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(rename = "SCORE")]
    pub score: f64,
}

impl ScoreReport {
    pub fn from_metrics(metrics: BTreeMap<String, f64>) -> Result<Self, MetricError> {
        let score = final_score(&metrics)?;
        Ok(Self { metrics, score })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// BLEU-1..4, ROUGE-L and CIDEr over a tokenized corpus.
pub fn evaluate(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<ScoreReport, MetricError> {
    let mut metrics = BTreeMap::new();
    for (n, name) in BLEU_NAMES.iter().enumerate() {
        metrics.insert(name.to_string(), corpus_bleu(candidates, references, n + 1)?);
    }
    metrics.insert(ROUGE_L.to_string(), corpus_rouge_l(candidates, references)?);
    metrics.insert(CIDER.to_string(), cider(candidates, references)?);
    ScoreReport::from_metrics(metrics)
}

/// Mean of `{mean of present BLEU-n} ∪ {every other present metric}`.
pub fn final_score(metrics: &BTreeMap<String, f64>) -> Result<f64, MetricError> {
    let bleu: Vec<f64> = BLEU_NAMES.iter().filter_map(|n| metrics.get(*n).copied()).collect();
    let mut parts: Vec<f64> = metrics
        .iter()
        .filter(|(k, _)| !BLEU_NAMES.contains(&k.as_str()))
        .map(|(_, &v)| v)
        .collect();
    if !bleu.is_empty() {
        parts.push(bleu.iter().sum::<f64>() / bleu.len() as f64);
    }
    if parts.is_empty() {
        return Err(MetricError::EmptyReport);
    }
    Ok(parts.iter().sum::<f64>() / parts.len() as f64)
}

/// Relative accuracy loss `(teacher - student) / teacher`, as a fraction.
pub fn accuracy_diff(teacher_score: f64, student_score: f64) -> Result<f64, MetricError> {
    if teacher_score <= 0.0 || !teacher_score.is_finite() {
        return Err(MetricError::NonPositiveTeacher(teacher_score));
    }
    Ok((teacher_score - student_score) / teacher_score)
}

/// Cuts `value` to `decimals` places, toward zero. Printed tables use this
/// (0.1277 is shown as 0.127, 57.45 as 57.4).
pub fn truncate_decimals(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // The slack keeps exact decimals such as 0.3 from dropping a digit.
    let cut = (value.abs() * scale + 1e-6).trunc() / scale;
    cut.copysign(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn teacher_row_score() {
        let m = report(&[
            ("BLEU-1", 0.760),
            ("BLEU-2", 0.612),
            ("BLEU-3", 0.473),
            ("BLEU-4", 0.352),
            ("CIDEr", 0.397),
            ("METEOR", 0.254),
            ("ROUGE-L", 0.583),
            ("SPICE", 0.054),
        ]);
        let s = final_score(&m).unwrap();
        assert!((s - 0.36745).abs() < 1e-12);
        assert!((s - 0.368).abs() <= 0.001);
    }

    #[test]
    fn single_metric_and_empty() {
        assert_eq!(final_score(&report(&[("CIDEr", 1.7)])).unwrap(), 1.7);
        assert_eq!(final_score(&report(&[("BLEU-2", 0.4)])).unwrap(), 0.4);
        assert_eq!(final_score(&BTreeMap::new()), Err(MetricError::EmptyReport));
    }

    #[test]
    fn diffs() {
        assert_eq!(truncate_decimals(accuracy_diff(0.368, 0.365).unwrap(), 3), 0.008);
        assert_eq!(truncate_decimals(accuracy_diff(0.368, 0.366).unwrap(), 3), 0.005);
        assert_eq!(accuracy_diff(0.368, 0.368).unwrap(), 0.0);
        assert!(accuracy_diff(0.0, 0.1).is_err());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_decimals(57.4548, 1), 57.4);
        assert_eq!(truncate_decimals(0.3, 1), 0.3);
        assert_eq!(truncate_decimals(-0.0127, 3), -0.012);
    }
}

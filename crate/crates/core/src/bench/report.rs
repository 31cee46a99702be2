use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{time_diff_percent, BenchError, TimingRecord};
use crate::compression::CompressionRate;
use crate::metrics::{accuracy_diff, truncate_decimals, ScoreReport, BLEU_NAMES, CIDER, ROUGE_L};

pub const TEACHER_LABEL: &str = "teacher";

/// One row of the score table. `diff` is the raw relative accuracy loss
/// against the teacher row; text output truncates it to 3 decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub rate: CompressionRate,
    pub metrics: BTreeMap<String, f64>,
    pub score: f64,
    pub diff: Option<f64>,
}

/// Teacher row first, then one row per student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(teacher: &ScoreReport, students: &[(String, CompressionRate, ScoreReport)]) -> Result<Self, BenchError> {
        let mut rows = vec![ScoreRow {
            model: TEACHER_LABEL.to_string(),
            rate: CompressionRate::FULL,
            metrics: teacher.metrics.clone(),
            score: teacher.score,
            diff: None,
        }];
        for (model, rate, report) in students {
            rows.push(ScoreRow {
                model: model.clone(),
                rate: *rate,
                metrics: report.metrics.clone(),
                score: report.score,
                diff: Some(accuracy_diff(teacher.score, report.score)?),
            });
        }
        Ok(Self { rows })
    }

    pub fn teacher(&self) -> &ScoreRow {
        &self.rows[0]
    }

    pub fn find(&self, model: &str, rate: CompressionRate) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.model == model && r.rate == rate)
    }

    pub fn render(&self) -> String {
        let mut columns: Vec<&str> = BLEU_NAMES.to_vec();
        columns.extend([CIDER, ROUGE_L]);
        let mut out = format!("{:<8} {:>4}", "model", "k");
        for c in &columns {
            write!(out, " {c:>7}").unwrap();
        }
        writeln!(out, " {:>7} {:>6}", "SCORE", "Diff").unwrap();
        for row in &self.rows {
            write!(out, "{:<8} {:>4.1}", row.model, row.rate.get()).unwrap();
            for c in &columns {
                match row.metrics.get(*c) {
                    Some(v) => write!(out, " {v:>7.3}").unwrap(),
                    None => write!(out, " {:>7}", "-").unwrap(),
                }
            }
            let diff = row
                .diff
                .map_or_else(|| "-".to_string(), |d| format!("{:.3}", truncate_decimals(d, 3)));
            writeln!(out, " {:>7.3} {diff:>6}", row.score).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub rate: CompressionRate,
    pub mean: f64,
    pub std: f64,
    /// Raw percent reduction against the `k = 1` row.
    pub diff_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
    pub records: Vec<TimingRecord>,
}

impl TimingTable {
    /// `records` must contain a `k = 1` entry, the teacher pipeline.
    pub fn new(records: Vec<TimingRecord>) -> Result<Self, BenchError> {
        let teacher = records
            .iter()
            .find(|r| r.rate.is_full())
            .ok_or_else(|| BenchError::Config("timing needs a k = 1.0 measurement".into()))?
            .mean;
        let rows = records
            .iter()
            .map(|r| {
                Ok(TimingRow {
                    rate: r.rate,
                    mean: r.mean,
                    std: r.std,
                    diff_percent: if r.rate.is_full() {
                        None
                    } else {
                        Some(time_diff_percent(teacher, r.mean)?)
                    },
                })
            })
            .collect::<Result<_, BenchError>>()?;
        Ok(Self { rows, records })
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:>4} {:>12} {:>12} {:>8}\n", "k", "mean (s)", "std (s)", "Diff (%)");
        for r in &self.rows {
            let diff = r
                .diff_percent
                .map_or_else(|| "-".to_string(), |d| format!("{:.1}", truncate_decimals(d, 1)));
            writeln!(out, "{:>4.1} {:>12.6} {:>12.6} {diff:>8}", r.rate.get(), r.mean, r.std).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scores: ScoreTable,
    pub timing: Option<TimingTable>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(score_scale: f64) -> ScoreReport {
        let metrics = [("BLEU-1", 0.8), ("BLEU-4", 0.4), ("CIDEr", 1.0), ("ROUGE-L", 0.6)]
            .iter()
            .map(|(k, v)| (k.to_string(), v * score_scale))
            .collect();
        ScoreReport::from_metrics(metrics).unwrap()
    }

    #[test]
    fn score_table_diffs_recompute() {
        let k = CompressionRate::new(0.6).unwrap();
        let t = ScoreTable::new(&report(1.0), &[("rep+ce".into(), k, report(0.9))]).unwrap();
        assert_eq!(t.rows.len(), 2);
        let row = t.find("rep+ce", k).unwrap();
        assert_eq!(row.diff.unwrap(), accuracy_diff(t.teacher().score, row.score).unwrap());
        let text = t.render();
        assert!(text.lines().nth(1).unwrap().starts_with("teacher"));
        assert!(text.contains("0.100") || text.contains("0.099"));
    }

    #[test]
    fn timing_table_needs_full_rate() {
        let rec = |k: f64, s: f64| TimingRecord::new(CompressionRate::new(k).unwrap(), 1, 1, vec![s]).unwrap();
        assert!(TimingTable::new(vec![rec(0.2, 1.0)]).is_err());
        let t = TimingTable::new(vec![rec(0.2, 2.77), rec(1.0, 13.28)]).unwrap();
        assert_eq!(t.rows[1].diff_percent, None);
        assert!(t.render().contains("79.1"));
    }
}

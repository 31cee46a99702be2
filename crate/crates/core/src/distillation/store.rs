//! On-disk layout of trained models.
//!
//! A teacher directory holds `teacher.dckp` (captioner parameters under
//! `captioner.`), `teacher.json`, `vocab.txt` and `loss.log`. A student
//! directory holds `student.dckp` (`captioner.` and `adapter.` parameters),
//! `student.json` and `loss.log`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Adapter, DistillError, DistilledModel, TrainConfig, TrainRegime};
use crate::captioner::{Captioner, CaptionerConfig};
use crate::compression::CompressionRate;
use crate::dataio::Vocabulary;
use crate::features::{ExtractorConfig, Extractors};
use crate::scalar::Scalar;
use crate::tensor::{read_checkpoint, write_checkpoint, ParamStore};

pub const TEACHER_CHECKPOINT: &str = "teacher.dckp";
pub const TEACHER_META: &str = "teacher.json";
pub const STUDENT_CHECKPOINT: &str = "student.dckp";
pub const STUDENT_META: &str = "student.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LOSS_LOG: &str = "loss.log";

const CAPTIONER_PREFIX: &str = "captioner.";
const ADAPTER_PREFIX: &str = "adapter.";

#[derive(Debug, Clone, PartialEq)]
pub struct LossEntry {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
}

/// Per-epoch mean losses, written as `epoch<TAB>split<TAB>loss` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossLog {
    pub entries: Vec<LossEntry>,
}

impl LossLog {
    pub fn push(&mut self, epoch: usize, split: &str, loss: f64) {
        self.entries.push(LossEntry {
            epoch,
            split: split.to_string(),
            loss,
        });
    }

    /// Losses recorded for `split`, in epoch order.
    pub fn losses(&self, split: &str) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.loss)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.epoch, e.split, e.loss).expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DistillError> {
        let mut log = Self::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || DistillError::Metadata(format!("loss log line {}: {line:?}", i + 1));
            let mut cols = line.split('\t');
            let (Some(epoch), Some(split), Some(loss), None) = (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad());
            };
            log.push(
                epoch.parse().map_err(|_| bad())?,
                split,
                loss.parse().map_err(|_| bad())?,
            );
        }
        Ok(log)
    }
}

/// Everything needed to rebuild the teacher pipeline besides its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherMeta {
    pub captioner: CaptionerConfig,
    pub extractor: ExtractorConfig,
    pub extractor_seed: u64,
    pub audio_bins: usize,
    pub video_channels: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl TeacherMeta {
    /// The frozen extractors shared by teacher and students.
    pub fn extractors<T: Scalar>(&self) -> Extractors<T> {
        Extractors::toy(
            self.audio_bins,
            self.video_channels,
            &self.extractor,
            self.extractor_seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the teacher checkpoint file, hex encoded.
    pub teacher_id: String,
    pub regime: TrainRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentMeta {
    pub rate: CompressionRate,
    pub provenance: Provenance,
    pub captioner: CaptionerConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Hex SHA-256 of a checkpoint's bytes.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn checkpoint_bytes<T: Scalar>(store: &ParamStore<T>) -> Result<Vec<u8>, DistillError> {
    let mut bytes = Vec::new();
    write_checkpoint(store, &mut bytes)?;
    Ok(bytes)
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<(), DistillError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| DistillError::Metadata(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S, DistillError> {
    let file = fs::File::open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| DistillError::Metadata(format!("{}: {e}", path.display())))
}

/// Writes a teacher directory and returns the checkpoint id.
pub fn save_teacher<T: Scalar>(
    dir: &Path,
    captioner: &Captioner<T>,
    meta: &TeacherMeta,
    vocab: &Vocabulary,
    log: &LossLog,
) -> Result<String, DistillError> {
    fs::create_dir_all(dir)?;
    let mut store = ParamStore::new();
    store.extend_prefixed(CAPTIONER_PREFIX, captioner.params());
    let bytes = checkpoint_bytes(&store)?;
    fs::write(dir.join(TEACHER_CHECKPOINT), &bytes)?;
    write_json(meta, &dir.join(TEACHER_META))?;
    let mut v = BufWriter::new(fs::File::create(dir.join(VOCAB_FILE))?);
    vocab.write(&mut v)?;
    v.flush()?;
    fs::write(dir.join(LOSS_LOG), log.render())?;
    Ok(checkpoint_id(&bytes))
}

/// Teacher captioner, metadata, vocabulary and checkpoint id.
pub fn load_teacher<T: Scalar>(dir: &Path) -> Result<(Captioner<T>, TeacherMeta, Vocabulary, String), DistillError> {
    let ckpt = dir.join(TEACHER_CHECKPOINT);
    if !ckpt.is_file() {
        return Err(DistillError::MissingTeacher(ckpt));
    }
    let bytes = fs::read(&ckpt)?;
    let store: ParamStore<T> = read_checkpoint(bytes.as_slice())?;
    let meta: TeacherMeta = read_json(&dir.join(TEACHER_META))?;
    let captioner = Captioner::from_params(meta.captioner, &store.extract_prefixed(CAPTIONER_PREFIX))?;
    let vocab = Vocabulary::read(BufReader::new(fs::File::open(dir.join(VOCAB_FILE))?))?;
    Ok((captioner, meta, vocab, checkpoint_id(&bytes)))
}

/// Writes a student directory and returns the checkpoint id.
pub fn save_student<T: Scalar>(
    dir: &Path,
    model: &DistilledModel<T>,
    train: &TrainConfig,
    seed: u64,
    log: &LossLog,
) -> Result<String, DistillError> {
    fs::create_dir_all(dir)?;
    let mut store = ParamStore::new();
    store.extend_prefixed(CAPTIONER_PREFIX, model.captioner.params());
    store.extend_prefixed(ADAPTER_PREFIX, model.adapter.params());
    let bytes = checkpoint_bytes(&store)?;
    fs::write(dir.join(STUDENT_CHECKPOINT), &bytes)?;
    let meta = StudentMeta {
        rate: model.rate,
        provenance: model.provenance.clone(),
        captioner: *model.captioner.config(),
        train: *train,
        seed,
    };
    write_json(&meta, &dir.join(STUDENT_META))?;
    fs::write(dir.join(LOSS_LOG), log.render())?;
    Ok(checkpoint_id(&bytes))
}

pub fn load_student<T: Scalar>(dir: &Path) -> Result<(DistilledModel<T>, StudentMeta), DistillError> {
    let store: ParamStore<T> = read_checkpoint(BufReader::new(fs::File::open(dir.join(STUDENT_CHECKPOINT))?))?;
    let meta: StudentMeta = read_json(&dir.join(STUDENT_META))?;
    let captioner = Captioner::from_params(meta.captioner, &store.extract_prefixed(CAPTIONER_PREFIX))?;
    let adapter = Adapter::from_params(&store.extract_prefixed(ADAPTER_PREFIX))?;
    let model = DistilledModel {
        adapter,
        captioner,
        rate: meta.rate,
        provenance: meta.provenance.clone(),
    };
    Ok((model, meta))
}

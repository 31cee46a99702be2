use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_timing_set, time_clips, BenchError, ExperimentConfig, ExperimentReport, ScoreTable, TimingTable};
use crate::captioner::{Captioner, CaptionerConfig};
use crate::compression::CompressionRate;
use crate::dataio::{generate_toy_dataset, load_manifest, split_samples, VideoSample, Vocabulary, MANIFEST_NAME};
use crate::distillation::{
    build_vocabulary, compute_latents, encode_captions, load_student, load_teacher, reference_tokens, save_student,
    save_teacher, score_captioner, score_student, train_student, train_teacher, RegimeMode, TeacherMeta, TrainRegime,
    STUDENT_CHECKPOINT, TEACHER_CHECKPOINT,
};
use crate::features::{Extractors, LatentVector};
use crate::metrics::ScoreReport;

pub const TEACHER_DIR: &str = "teacher";
pub const STUDENTS_DIR: &str = "students";
pub const SCORE_TABLE: &str = "table1.txt";
pub const SCORE_JSON: &str = "table1.json";
pub const TIMING_TABLE: &str = "table2.txt";
pub const TIMING_JSON: &str = "table2.json";
const DATA_DIR: &str = "data";
const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Dataset split, frozen extractors and a cache of their latents. Training
/// and scoring run in `f64`.
#[derive(Debug)]
pub struct Pipeline {
    pub config: ExperimentConfig,
    train: Vec<VideoSample>,
    test: Vec<VideoSample>,
    audio_bins: usize,
    video_channels: usize,
    extractors: Extractors<f64>,
    cache: HashMap<(Split, u64), Vec<LatentVector<f64>>>,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, manifest: &Path) -> Result<Self, BenchError> {
        config.validate()?;
        let samples = load_manifest(manifest)?;
        let first = samples.first().ok_or(BenchError::EmptyManifest)?;
        let audio_bins = first.load_audio::<f64>()?.bins();
        let video_channels = first.load_video()?.channels();
        let (train, test) = split_samples(&samples, config.seed, config.dataset.train_fraction);
        if train.is_empty() || test.is_empty() {
            return Err(BenchError::Config(format!(
                "{} samples cannot be split into train and test",
                samples.len()
            )));
        }
        let extractors = Extractors::toy(audio_bins, video_channels, &config.extractor, config.seed);
        Ok(Self {
            config,
            train,
            test,
            audio_bins,
            video_channels,
            extractors,
            cache: HashMap::new(),
        })
    }

    pub fn samples(&self, split: Split) -> &[VideoSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn extractors(&self) -> &Extractors<f64> {
        &self.extractors
    }

    /// Latents of `split` at rate `k`, computed on first use.
    pub fn latents(&mut self, split: Split, k: CompressionRate) -> Result<Vec<LatentVector<f64>>, BenchError> {
        let key = (split, k.get().to_bits());
        if !self.cache.contains_key(&key) {
            let z = compute_latents(&self.extractors, self.samples(split), k)?;
            self.cache.insert(key, z);
        }
        Ok(self.cache[&key].clone())
    }

    fn captioner_config(&self, vocab: &Vocabulary) -> CaptionerConfig {
        CaptionerConfig {
            vocab_size: vocab.len(),
            latent_dim: self.extractors.latent_dim(),
            ..self.config.captioner
        }
    }

    /// Trains the teacher on uncompressed training latents and writes it to
    /// `out`. Returns the checkpoint id.
    pub fn train_teacher(&mut self, out: &Path) -> Result<String, BenchError> {
        let vocab = build_vocabulary(&self.train, self.config.dataset.vocab_min_freq);
        let latents = self.latents(Split::Train, CompressionRate::FULL)?;
        let captions = encode_captions(&self.train, &vocab);
        let cc = self.captioner_config(&vocab);
        let trained = train_teacher(&latents, &captions, cc, &self.config.train, self.config.seed)?;
        let meta = TeacherMeta {
            captioner: cc,
            extractor: self.config.extractor,
            extractor_seed: self.config.seed,
            audio_bins: self.audio_bins,
            video_channels: self.video_channels,
            train: self.config.train,
            seed: self.config.seed,
        };
        Ok(save_teacher(out, &trained.captioner, &meta, &vocab, &trained.log)?)
    }

    /// Loads a teacher and checks that it was built on this pipeline's
    /// extractors.
    pub fn load_teacher(&self, dir: &Path) -> Result<(Captioner<f64>, Vocabulary, String), BenchError> {
        let (captioner, meta, vocab, id) = load_teacher(dir)?;
        let ours = (
            self.config.extractor,
            self.config.seed,
            self.audio_bins,
            self.video_channels,
        );
        let theirs = (
            meta.extractor,
            meta.extractor_seed,
            meta.audio_bins,
            meta.video_channels,
        );
        if ours != theirs {
            return Err(BenchError::Config(format!(
                "teacher in {} was trained with different extractors",
                dir.display()
            )));
        }
        Ok((captioner, vocab, id))
    }

    /// Trains one student against the teacher in `teacher_dir` and writes it
    /// to `out`. Returns the checkpoint id.
    pub fn train_student(
        &mut self,
        teacher_dir: &Path,
        k: CompressionRate,
        mode: RegimeMode,
        out: &Path,
    ) -> Result<String, BenchError> {
        let (_, vocab, teacher_id) = self.load_teacher(teacher_dir)?;
        let regime = TrainRegime::new(mode, self.config.lambda_rep)?;
        let teacher_latents = self.latents(Split::Train, CompressionRate::FULL)?;
        let student_latents = self.latents(Split::Train, k)?;
        let captions = encode_captions(&self.train, &vocab);
        let (model, log) = train_student(
            &student_latents,
            &teacher_latents,
            &captions,
            self.captioner_config(&vocab),
            k,
            regime,
            &self.config.train,
            self.config.seed,
            &teacher_id,
        )?;
        Ok(save_student(out, &model, &self.config.train, self.config.seed, &log)?)
    }

    pub fn score_teacher(&mut self, teacher_dir: &Path) -> Result<ScoreReport, BenchError> {
        let (captioner, vocab, _) = self.load_teacher(teacher_dir)?;
        let latents = self.latents(Split::Test, CompressionRate::FULL)?;
        let refs = reference_tokens(&self.test);
        Ok(score_captioner(
            &captioner,
            &latents,
            &refs,
            &vocab,
            self.config.train.max_caption_len,
        )?)
    }

    pub fn score_student(&mut self, teacher_dir: &Path, student_dir: &Path) -> Result<ScoreReport, BenchError> {
        let (_, vocab, teacher_id) = self.load_teacher(teacher_dir)?;
        let (model, _) = load_student::<f64>(student_dir)?;
        if model.provenance.teacher_id != teacher_id {
            return Err(BenchError::Config(format!(
                "student in {} was distilled from a different teacher",
                student_dir.display()
            )));
        }
        let latents = self.latents(Split::Test, model.rate)?;
        let refs = reference_tokens(&self.test);
        Ok(score_student(
            &model,
            &latents,
            &refs,
            &vocab,
            self.config.train.max_caption_len,
        )?)
    }

    /// Extraction timings at each rate (plus `k = 1` if missing) over a
    /// seeded selection of training and test clips.
    pub fn time_extraction(&self, rates: &[CompressionRate]) -> Result<TimingTable, BenchError> {
        let t = &self.config.timing;
        let all: Vec<VideoSample> = self.train.iter().chain(&self.test).cloned().collect();
        let clips = load_timing_set::<f64>(&all, t.videos, self.config.seed)?;
        let mut rates = rates.to_vec();
        if !rates.iter().any(|k| k.is_full()) {
            rates.push(CompressionRate::FULL);
        }
        let records = rates
            .iter()
            .map(|&k| time_clips(&clips, k, t.repeats, &self.extractors))
            .collect::<Result<Vec<_>, _>>()?;
        TimingTable::new(records)
    }
}

/// Output directory of the student for `(mode, k)`, e.g. `students/rep_ce-k0.6`.
pub fn student_dir(out: &Path, mode: RegimeMode, k: CompressionRate) -> PathBuf {
    let slug = match mode {
        RegimeMode::RepOnly => "rep",
        RegimeMode::RepPlusCe => "rep_ce",
    };
    out.join(STUDENTS_DIR).join(format!("{slug}-k{k}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentRun {
    pub mode: RegimeMode,
    pub rate: CompressionRate,
    pub dir: PathBuf,
}

/// Resolves the manifest, generating the toy dataset under `out/data` when
/// the config names none and it does not exist yet.
pub fn stage_data(config: &ExperimentConfig, out: &Path) -> Result<Pipeline, BenchError> {
    let run = || {
        fs::create_dir_all(out)?;
        fs::write(out.join(CONFIG_COPY), config.to_toml())?;
        let manifest = match &config.dataset.manifest {
            Some(m) => m.clone(),
            None => {
                let dir = out.join(DATA_DIR);
                let m = dir.join(MANIFEST_NAME);
                if !m.is_file() {
                    generate_toy_dataset(config.seed, config.dataset.toy_videos, &dir)?;
                }
                m
            }
        };
        Pipeline::new(config.clone(), &manifest)
    };
    run().map_err(BenchError::in_stage("data"))
}

/// Trains the teacher unless `out/teacher` already holds a checkpoint.
pub fn stage_teacher(p: &mut Pipeline, out: &Path) -> Result<PathBuf, BenchError> {
    let dir = out.join(TEACHER_DIR);
    if !dir.join(TEACHER_CHECKPOINT).is_file() {
        p.train_teacher(&dir).map_err(BenchError::in_stage("teacher"))?;
    }
    Ok(dir)
}

/// Trains every configured `(regime, k)` student that has no checkpoint yet.
/// Fails when the teacher stage has not produced a checkpoint.
pub fn stage_students(p: &mut Pipeline, out: &Path) -> Result<Vec<StudentRun>, BenchError> {
    let teacher = out.join(TEACHER_DIR);
    let mut runs = Vec::new();
    let (regimes, rates) = (p.config.regimes.clone(), p.config.rates.clone());
    for &mode in &regimes {
        for &rate in &rates {
            let dir = student_dir(out, mode, rate);
            if !dir.join(STUDENT_CHECKPOINT).is_file() {
                p.train_student(&teacher, rate, mode, &dir)
                    .map_err(BenchError::in_stage("student"))?;
            }
            runs.push(StudentRun { mode, rate, dir });
        }
    }
    Ok(runs)
}

/// Scores teacher and students on the test split and writes the score table.
pub fn stage_score(p: &mut Pipeline, out: &Path, students: &[StudentRun]) -> Result<ScoreTable, BenchError> {
    let mut run = || {
        let teacher_dir = out.join(TEACHER_DIR);
        let teacher = p.score_teacher(&teacher_dir)?;
        let mut rows = Vec::with_capacity(students.len());
        for s in students {
            rows.push((s.mode.to_string(), s.rate, p.score_student(&teacher_dir, &s.dir)?));
        }
        let table = ScoreTable::new(&teacher, &rows)?;
        fs::write(out.join(SCORE_TABLE), table.render())?;
        fs::write(out.join(SCORE_JSON), to_json(&table))?;
        Ok(table)
    };
    run().map_err(BenchError::in_stage("score"))
}

/// Times extraction at the configured rates and writes the timing table.
pub fn stage_timing(p: &Pipeline, out: &Path) -> Result<TimingTable, BenchError> {
    let run = || {
        let table = p.time_extraction(&p.config.timing.rates)?;
        fs::write(out.join(TIMING_TABLE), table.render())?;
        fs::write(out.join(TIMING_JSON), to_json(&table))?;
        Ok(table)
    };
    run().map_err(BenchError::in_stage("timing"))
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

/// Runs every stage into `out`. Stages whose checkpoints already exist are
/// reused, so an interrupted run can be resumed; delete `out` to retrain.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, BenchError> {
    let mut p = stage_data(config, out)?;
    stage_teacher(&mut p, out)?;
    let students = stage_students(&mut p, out)?;
    let scores = stage_score(&mut p, out, &students)?;
    let timing = if config.timing.enabled {
        Some(stage_timing(&p, out)?)
    } else {
        None
    };
    Ok(ExperimentReport { scores, timing })
}

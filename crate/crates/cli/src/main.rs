use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use distillcap::bench::{run_experiment, stage_timing, ExperimentConfig, Pipeline};
use distillcap::compression::CompressionRate;
use distillcap::dataio::{generate_toy_dataset, load_manifest, tokenize};
use distillcap::distillation::RegimeMode;
use distillcap::features::save_features;
use distillcap::metrics::{accuracy_diff, evaluate, ScoreReport};
use serde::Serialize;

const DEFAULT_OUT: &str = "out";

#[derive(Parser)]
#[command(
    name = "distillcap",
    version,
    about = "Compressed audio-visual captioning with latent distillation"
)]
struct Cli {
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML). Built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, or the report file of `score`. Defaults to `out`,
    /// and `score` prints to stdout when it is omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic toy dataset.
    GenToy {
        #[arg(long, default_value_t = 40)]
        videos: usize,
    },
    /// Write compressed features of every clip as feature files.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "1.0", value_parser = parse_rate)]
        rate: CompressionRate,
    },
    /// Train the teacher captioner on uncompressed clips.
    TrainTeacher {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Distil a student at one compression rate.
    TrainStudent {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, value_parser = parse_rate)]
        rate: CompressionRate,
        #[arg(long, default_value = "rep+ce")]
        regime: RegimeMode,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score caption files (--hyp with --refs), or a trained teacher or
    /// student on the test split.
    Score {
        /// Candidate captions, one `id<TAB>caption` line per clip.
        #[arg(long, requires = "refs", conflicts_with_all = ["teacher", "student"])]
        hyp: Option<PathBuf>,
        /// Reference captions as `id<TAB>caption` lines; ids may repeat.
        #[arg(long, requires = "hyp")]
        refs: Option<PathBuf>,
        #[arg(long, required_unless_present = "hyp")]
        teacher: Option<PathBuf>,
        #[arg(long, requires = "teacher")]
        student: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Earlier report to compare against; adds a `diff_vs` block.
        #[arg(long)]
        diff_vs: Option<PathBuf>,
    },
    /// Time feature extraction across compression rates.
    Bench {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate)]
        rates: Vec<CompressionRate>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        videos: Option<usize>,
    },
    /// Run the full experiment.
    Run,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::GenToy { .. } => "gen-toy",
            Command::Extract { .. } => "extract",
            Command::TrainTeacher { .. } => "train-teacher",
            Command::TrainStudent { .. } => "train-student",
            Command::Score { .. } => "score",
            Command::Bench { .. } => "bench",
            Command::Run => "run",
        }
    }
}

fn parse_rate(s: &str) -> Result<CompressionRate, String> {
    let k: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    CompressionRate::new(k).map_err(|e| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn manifest_or_config(manifest: &Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf> {
    match manifest.as_ref().or(config.dataset.manifest.as_ref()) {
        Some(m) => Ok(m.clone()),
        None => bail!("no manifest given; pass --manifest or set dataset.manifest in the config"),
    }
}

fn pipeline(manifest: &Option<PathBuf>, config: &ExperimentConfig) -> Result<Pipeline> {
    let m = manifest_or_config(manifest, config)?;
    Pipeline::new(config.clone(), &m).with_context(|| format!("loading {}", m.display()))
}

fn execute(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out = cli.out.as_deref().unwrap_or(Path::new(DEFAULT_OUT));
    match &cli.command {
        Command::GenToy { videos } => {
            let manifest = generate_toy_dataset(config.seed, *videos, out)?;
            println!("{}", manifest.display());
        }
        Command::Extract { manifest, rate } => extract(manifest, *rate, &config, out)?,
        Command::TrainTeacher { manifest } => {
            let id = pipeline(manifest, &config)?.train_teacher(out)?;
            println!("teacher {id} -> {}", out.display());
        }
        Command::TrainStudent {
            teacher,
            rate,
            regime,
            manifest,
        } => {
            let id = pipeline(manifest, &config)?.train_student(teacher, *rate, *regime, out)?;
            println!("student {id} -> {}", out.display());
        }
        Command::Score {
            hyp,
            refs,
            teacher,
            student,
            manifest,
            diff_vs,
        } => {
            let report = match (hyp, refs, teacher) {
                (Some(h), Some(r), _) => score_files(h, r)?,
                (_, _, Some(t)) => {
                    let mut p = pipeline(manifest, &config)?;
                    match student {
                        Some(s) => p.score_student(t, s)?,
                        None => p.score_teacher(t)?,
                    }
                }
                _ => bail!("pass --hyp with --refs, or --teacher"),
            };
            let diff_vs = diff_vs.as_deref().map(|path| compare(path, &report)).transpose()?;
            let json = serde_json::to_string_pretty(&ScoreOutput {
                report: &report,
                diff_vs,
            })?;
            match &cli.out {
                Some(path) => fs::write(path, json + "\n").with_context(|| path.display().to_string())?,
                None => println!("{json}"),
            }
        }
        Command::Bench {
            manifest,
            rates,
            repeats,
            videos,
        } => {
            let mut config = config.clone();
            if !rates.is_empty() {
                config.timing.rates = rates.clone();
            }
            config.timing.repeats = repeats.unwrap_or(config.timing.repeats);
            config.timing.videos = videos.unwrap_or(config.timing.videos);
            let p = pipeline(manifest, &config)?;
            fs::create_dir_all(out)?;
            print!("{}", stage_timing(&p, out)?.render());
        }
        Command::Run => {
            let report = run_experiment(&config, out)?;
            print!("{}", report.scores.render());
            if let Some(t) = &report.timing {
                println!();
                print!("{}", t.render());
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreOutput<'a> {
    #[serde(flatten)]
    report: &'a ScoreReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    diff_vs: Option<DiffVs>,
}

#[derive(Serialize)]
struct DiffVs {
    report: PathBuf,
    #[serde(rename = "SCORE")]
    score: f64,
    /// Relative score loss against the earlier report, as a fraction.
    diff: f64,
}

fn compare(path: &Path, report: &ScoreReport) -> Result<DiffVs> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let base: ScoreReport = serde_json::from_str(&text).with_context(|| path.display().to_string())?;
    Ok(DiffVs {
        report: path.to_path_buf(),
        score: base.score,
        diff: accuracy_diff(base.score, report.score)?,
    })
}

/// `id<TAB>caption` lines; blank lines are skipped.
fn read_captions(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split_once('\t') {
            Some((id, caption)) => Ok((id.trim().to_string(), caption.to_string())),
            None => bail!("{}:{}: expected `id<TAB>caption`", path.display(), i + 1),
        })
        .collect()
}

fn score_files(hyp: &Path, refs: &Path) -> Result<ScoreReport> {
    let mut references: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for (id, caption) in read_captions(refs)? {
        references.entry(id).or_default().push(tokenize(&caption));
    }
    let mut candidates = Vec::new();
    let mut matched = Vec::new();
    for (id, caption) in read_captions(hyp)? {
        let Some(r) = references.remove(&id) else {
            bail!("no reference captions for {id:?}");
        };
        candidates.push(tokenize(&caption));
        matched.push(r);
    }
    if let Some(id) = references.keys().next() {
        bail!("no candidate caption for {id:?}");
    }
    Ok(evaluate(&candidates, &matched)?)
}

fn extract(manifest: &Path, rate: CompressionRate, config: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = Pipeline::new(config.clone(), manifest)?;
    fs::create_dir_all(out)?;
    let samples = load_manifest(manifest)?;
    for s in &samples {
        let (a, v) = p
            .extractors()
            .extract(&s.load_audio()?, &s.load_video()?, rate)
            .with_context(|| s.id.clone())?;
        save_features(&a, &out.join(format!("{}.audio.dcft", s.id)))?;
        save_features(&v, &out.join(format!("{}.visual.dcft", s.id)))?;
    }
    println!("{} clips at k = {rate} -> {}", samples.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("distillcap {}: {e:#}", cli.command.stage());
            ExitCode::FAILURE
        }
    }
}

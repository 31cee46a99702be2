//! Synthetic desk-scale dataset.
//!
//! Each clip draws a visual pattern, a colour and a sound class. Frames and
//! spectral rows are rendered from those classes and every caption names all
//! three, so captions are predictable from extracted features.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{write_manifest, VideoSample};
use super::media::{write_audio, write_video};
use super::DataError;
use crate::compression::{AudioFrames, VideoFrames};

pub const PATTERNS: [&str; 5] = [
    "horizontal stripes",
    "vertical stripes",
    "checkerboard",
    "bright circle",
    "diagonal lines",
];
pub const COLORS: [&str; 3] = ["red", "green", "blue"];
pub const SOUNDS: [&str; 4] = ["low hum", "high whistle", "fast beat", "soft noise"];

pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyShape {
    pub bins: usize,
    pub audio_frames: usize,
    pub video_frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for ToyShape {
    fn default() -> Self {
        Self {
            bins: 16,
            audio_frames: 64,
            video_frames: 20,
            channels: 3,
            height: 32,
            width: 32,
        }
    }
}

/// Class labels behind one synthetic clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyClasses {
    pub pattern: usize,
    pub color: usize,
    pub sound: usize,
}

impl ToyClasses {
    pub fn captions(&self) -> Vec<String> {
        let (p, c, s) = (PATTERNS[self.pattern], COLORS[self.color], SOUNDS[self.sound]);
        vec![
            format!("A {c} {p} with a {s}."),
            format!("{c} {p} and a {s}"),
            format!("A {s} over {c} {p}."),
        ]
    }
}

fn render_audio(classes: ToyClasses, shape: &ToyShape, rng: &mut ChaCha8Rng) -> AudioFrames<f64> {
    let (s, n) = (shape.bins, shape.audio_frames);
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let phase = rng.gen_range(0.0..2.0 * PI);
    let gain = rng.gen_range(0.8..1.2);
    let band = |lo: f64, hi: f64| ((lo * s as f64) as usize, ((hi * s as f64) as usize).max(1));
    let mut data = vec![0.0; s * n];
    for b in 0..s {
        for t in 0..n {
            let tt = t as f64 / n as f64;
            let v = match classes.sound {
                0 => {
                    let (lo, hi) = band(0.0, 0.25);
                    if (lo..hi).contains(&b) {
                        1.0 + 0.3 * (2.0 * PI * tt + phase).cos()
                    } else {
                        0.0
                    }
                }
                1 => {
                    let (lo, hi) = band(0.6875, 1.0);
                    if (lo..hi).contains(&b) {
                        0.8 + 0.3 * (4.0 * PI * tt + phase).cos()
                    } else {
                        0.0
                    }
                }
                2 => {
                    let (lo, hi) = band(0.3125, 0.625);
                    if (lo..hi).contains(&b) {
                        0.6 + 0.6 * (10.0 * PI * tt + phase).cos()
                    } else {
                        0.0
                    }
                }
                _ => rng.gen_range(0.0..0.6),
            };
            data[b * n + t] = gain * v + noise.sample(rng);
        }
    }
    AudioFrames::new(s, n, data, 32.0).expect("finite synthetic audio")
}

fn pattern_value(pattern: usize, x: usize, y: usize, shift: usize, centre: (f64, f64)) -> f64 {
    let on = match pattern {
        0 => ((y + shift) / 4).is_multiple_of(2),
        1 => ((x + shift) / 4).is_multiple_of(2),
        2 => ((x + shift) / 4 + y / 4).is_multiple_of(2),
        3 => {
            let (dx, dy) = (x as f64 - centre.0, y as f64 - centre.1);
            dx * dx + dy * dy < 64.0
        }
        _ => ((x + y + shift) / 5).is_multiple_of(2),
    };
    if on {
        1.0
    } else {
        0.0
    }
}

fn render_video(classes: ToyClasses, shape: &ToyShape, rng: &mut ChaCha8Rng) -> VideoFrames {
    let (c, h, w) = (shape.channels, shape.height, shape.width);
    let offset = rng.gen_range(0..8);
    let cy = rng.gen_range(10.0..(h as f64 - 10.0).max(10.5));
    let mut frames = Vec::with_capacity(shape.video_frames);
    for t in 0..shape.video_frames {
        let shift = offset + t;
        let cx = (offset as f64 + 1.2 * t as f64) % w as f64;
        let mut frame = vec![0u8; c * h * w];
        for ch in 0..c {
            let (hi, lo) = if ch == classes.color % c {
                (200.0, 30.0)
            } else {
                (40.0, 20.0)
            };
            for y in 0..h {
                for x in 0..w {
                    let p = pattern_value(classes.pattern, x, y, shift, (cx, cy));
                    let v = lo + hi * p + rng.gen_range(0.0..20.0);
                    frame[(ch * h + y) * w + x] = v.clamp(0.0, 255.0) as u8;
                }
            }
        }
        frames.push(frame);
    }
    VideoFrames::new(c, h, w, frames, 10.0).expect("consistent synthetic frames")
}

/// Draws the classes of `n_videos` clips from `seed`.
pub fn toy_classes(seed: u64, n_videos: usize) -> Vec<ToyClasses> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_videos)
        .map(|_| ToyClasses {
            pattern: rng.gen_range(0..PATTERNS.len()),
            color: rng.gen_range(0..COLORS.len()),
            sound: rng.gen_range(0..SOUNDS.len()),
        })
        .collect()
}

/// Writes `n_videos` clips plus `manifest.tsv` under `out_dir` and returns the
/// manifest path. Output is a pure function of `(seed, n_videos)`.
pub fn generate_toy_dataset(seed: u64, n_videos: usize, out_dir: &Path) -> Result<PathBuf, DataError> {
    generate_toy_dataset_with(seed, n_videos, out_dir, &ToyShape::default())
}

pub fn generate_toy_dataset_with(
    seed: u64,
    n_videos: usize,
    out_dir: &Path,
    shape: &ToyShape,
) -> Result<PathBuf, DataError> {
    if n_videos < 2 {
        return Err(DataError::Config(format!(
            "toy dataset needs at least 2 videos, got {n_videos}"
        )));
    }
    let audio_dir = out_dir.join("audio");
    let video_dir = out_dir.join("video");
    for d in [&audio_dir, &video_dir] {
        fs::create_dir_all(d).map_err(|e| DataError::io(d, e))?;
    }
    let classes = toy_classes(seed, n_videos);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut samples = Vec::with_capacity(n_videos);
    for (i, cls) in classes.iter().enumerate() {
        let id = format!("toy{i:04}");
        let audio_path = audio_dir.join(format!("{id}.dcau"));
        let video_path = video_dir.join(format!("{id}.dcvi"));
        write_audio(&render_audio(*cls, shape, &mut rng), &audio_path)?;
        write_video(&render_video(*cls, shape, &mut rng), &video_path)?;
        samples.push(VideoSample {
            id,
            audio_path,
            video_path,
            captions: cls.captions(),
        });
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    let file = fs::File::create(&manifest).map_err(|e| DataError::io(&manifest, e))?;
    write_manifest(&samples, out_dir, std::io::BufWriter::new(file))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{load_manifest, tokenize};

    fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for sub in ["", "audio", "video"] {
            let d = dir.join(sub);
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    out.push((
                        p.strip_prefix(dir).unwrap().display().to_string(),
                        fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn deterministic_tree() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_toy_dataset(7, 4, a.path()).unwrap();
        generate_toy_dataset(7, 4, b.path()).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()));
    }

    #[test]
    fn forty_unique_captioned_videos() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_toy_dataset(7, 40, dir.path()).unwrap();
        let samples = load_manifest(&m).unwrap();
        assert_eq!(samples.len(), 40);
        let classes = toy_classes(7, 40);
        for (s, c) in samples.iter().zip(&classes) {
            assert!(!s.captions.is_empty());
            for cap in &s.captions {
                let toks = tokenize(cap).join(" ");
                assert!(toks.contains(PATTERNS[c.pattern]));
                assert!(toks.contains(COLORS[c.color]));
                assert!(toks.contains(SOUNDS[c.sound]));
            }
            let audio = s.load_audio::<f64>().unwrap();
            assert_eq!((audio.bins(), audio.frames()), (16, 64));
            assert_eq!(s.load_video().unwrap().len(), 20);
        }
    }

    #[test]
    fn rejects_tiny_request() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_toy_dataset(1, 1, dir.path()).is_err());
    }
}

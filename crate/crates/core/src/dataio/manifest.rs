use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::media::{read_audio, read_video};
use super::DataError;
use crate::compression::{AudioFrames, VideoFrames};
use crate::scalar::Scalar;

/// One manifest record. Media paths are resolved against the manifest's
/// directory; the files are only opened on access.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub id: String,
    pub audio_path: PathBuf,
    pub video_path: PathBuf,
    pub captions: Vec<String>,
}

impl VideoSample {
    pub fn load_audio<T: Scalar>(&self) -> Result<AudioFrames<T>, DataError> {
        read_audio(&self.audio_path)
    }

    pub fn load_video(&self) -> Result<VideoFrames, DataError> {
        read_video(&self.video_path)
    }
}

/// Parses `id<TAB>audio<TAB>video<TAB>caption|caption|…` lines. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<VideoSample>, DataError> {
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(DataError::Parse {
                line: line_no,
                message: "empty id".into(),
            });
        }
        for (name, f) in [("audio", fields[1]), ("video", fields[2])] {
            if f.trim().is_empty() {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("empty {name} path"),
                });
            }
        }
        let captions: Vec<String> = fields[3]
            .split('|')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_owned)
            .collect();
        if captions.is_empty() {
            return Err(DataError::Parse {
                line: line_no,
                message: "no captions".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(DataError::DuplicateId(id.to_string()));
        }
        samples.push(VideoSample {
            id: id.to_string(),
            audio_path: base.join(fields[1].trim()),
            video_path: base.join(fields[2].trim()),
            captions,
        });
    }
    Ok(samples)
}

pub fn load_manifest(path: &Path) -> Result<Vec<VideoSample>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Writes a manifest with media paths relative to `base`.
pub fn write_manifest<W: Write>(samples: &[VideoSample], base: &Path, mut w: W) -> Result<(), DataError> {
    for s in samples {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            s.id,
            rel(&s.audio_path),
            rel(&s.video_path),
            s.captions.join("|")
        )?;
    }
    Ok(())
}

/// Seeded shuffle split; the test side gets `round((1 - train_fraction) * n)`
/// samples, at least one when `n >= 2`.
pub fn split_samples(samples: &[VideoSample], seed: u64, train_fraction: f64) -> (Vec<VideoSample>, Vec<VideoSample>) {
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_test = ((1.0 - train_fraction) * n as f64).round() as usize;
    if n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    }
    let (test_idx, train_idx) = order.split_at(n_test.min(n));
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i].clone()).collect()
    };
    (pick(train_idx), pick(test_idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_lines() {
        let text = "v1\ta/v1.dcau\tv/v1.dcvi\tA dog runs.|a dog is running\nv2\ta/v2.dcau\tv/v2.dcvi\ta cat\n";
        let s = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].captions.len(), 2);
        assert_eq!(s[1].audio_path, Path::new("/data/a/v2.dcau"));
    }

    #[test]
    fn duplicate_id_named() {
        let text = "v1\ta\tb\tx\nv1\ta\tb\ty\n";
        match parse_manifest(text, Path::new(".")) {
            Err(DataError::DuplicateId(id)) => assert_eq!(id, "v1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_cites_line() {
        let text = "v1\ta\tb\tx\nv2\ta\tb\ty\nbroken line\n";
        match parse_manifest(text, Path::new(".")) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_manifest("v1\ta\tb\t|\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn missing_media_reported_lazily() {
        let s = parse_manifest("v1\tnope.dcau\tnope.dcvi\tx\n", Path::new("/nonexistent")).unwrap();
        assert!(matches!(s[0].load_video(), Err(DataError::MissingFile(_))));
        assert!(matches!(s[0].load_audio::<f64>(), Err(DataError::MissingFile(_))));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let text: String = (0..10).map(|i| format!("v{i}\ta\tb\tc\n")).collect();
        let s = parse_manifest(&text, Path::new(".")).unwrap();
        let (tr, te) = split_samples(&s, 3, 0.8);
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split_samples(&s, 3, 0.8);
        assert_eq!((tr.clone(), te.clone()), (tr2, te2));
        assert!(te.iter().all(|t| !tr.iter().any(|x| x.id == t.id)));
    }

    #[test]
    fn write_then_parse() {
        let text = "v1\ta/1.dcau\tv/1.dcvi\tone|two\n";
        let s = parse_manifest(text, Path::new("/d")).unwrap();
        let mut out = Vec::new();
        write_manifest(&s, Path::new("/d"), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}

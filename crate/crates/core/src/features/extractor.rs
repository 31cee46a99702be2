use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureSequence, Modality};
use crate::compression::{AudioFrames, VideoFrames};
use crate::scalar::Scalar;

/// Frames per audio window.
pub const AUDIO_WINDOW: usize = 8;
/// Hop between consecutive audio windows.
pub const AUDIO_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub audio_dim: usize,
    pub visual_dim: usize,
    /// Channels of the first visual convolution.
    pub conv_channels: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            audio_dim: 32,
            visual_dim: 64,
            conv_channels: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    ToyConv,
}

/// Window start offsets over `frames` audio frames. Always at least one
/// window; a clip shorter than one window is zero-padded.
pub fn audio_windows(frames: usize) -> Vec<usize> {
    if frames <= AUDIO_WINDOW {
        return vec![0];
    }
    (0..=(frames - AUDIO_WINDOW) / AUDIO_STRIDE)
        .map(|i| i * AUDIO_STRIDE)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct AudioNet<T> {
    bins: usize,
    dim: usize,
    /// `(bins * AUDIO_WINDOW) × dim`, row-major.
    weight: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
struct Conv<T> {
    in_ch: usize,
    out_ch: usize,
    /// `out_ch × in_ch × 3 × 3`.
    weight: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
struct VisualNet<T> {
    channels: usize,
    first: Conv<T>,
    second: Conv<T>,
}

#[derive(Debug, Clone, PartialEq)]
enum Net<T> {
    Audio(AudioNet<T>),
    Visual(VisualNet<T>),
}

/// Frozen, seeded stand-in for a pretrained backbone.
///
/// Audio: each window of 8 frames (stride 4) is flattened and mapped through
/// one dense layer with `tanh`. Visual: every frame goes through two strided
/// 3×3 convolutions (ReLU, then `tanh`) and a global average pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor<T> {
    pub kind: ExtractorKind,
    pub seed: u64,
    net: Net<T>,
}

fn uniform_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..n).map(|_| T::of(dist.sample(rng))).collect()
}

impl<T: Scalar> Extractor<T> {
    pub fn toy_audio(bins: usize, config: &ExtractorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = bins * AUDIO_WINDOW;
        let bound = (3.0 / fan_in as f64).sqrt();
        let weight = uniform_vec(&mut rng, fan_in * config.audio_dim, bound);
        let bias = uniform_vec(&mut rng, config.audio_dim, 0.1);
        Self {
            kind: ExtractorKind::ToyConv,
            seed,
            net: Net::Audio(AudioNet {
                bins,
                dim: config.audio_dim,
                weight,
                bias,
            }),
        }
    }

    pub fn toy_visual(channels: usize, config: &ExtractorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5649_5355_414c);
        let mut conv = |in_ch: usize, out_ch: usize| {
            let bound = (6.0 / (in_ch * 9) as f64).sqrt();
            Conv {
                in_ch,
                out_ch,
                weight: uniform_vec(&mut rng, out_ch * in_ch * 9, bound),
                bias: uniform_vec(&mut rng, out_ch, 0.05),
            }
        };
        let first = conv(channels, config.conv_channels);
        let second = conv(config.conv_channels, config.visual_dim);
        Self {
            kind: ExtractorKind::ToyConv,
            seed,
            net: Net::Visual(VisualNet {
                channels,
                first,
                second,
            }),
        }
    }

    pub fn modality(&self) -> Modality {
        match self.net {
            Net::Audio(_) => Modality::Audio,
            Net::Visual(_) => Modality::Visual,
        }
    }

    /// Output feature dimension.
    pub fn dim(&self) -> usize {
        match &self.net {
            Net::Audio(a) => a.dim,
            Net::Visual(v) => v.second.out_ch,
        }
    }

    /// Sets every bias to zero.
    pub fn with_zero_biases(mut self) -> Self {
        match &mut self.net {
            Net::Audio(a) => a.bias.iter_mut().for_each(|b| *b = T::zero()),
            Net::Visual(v) => {
                for c in [&mut v.first, &mut v.second] {
                    c.bias.iter_mut().for_each(|b| *b = T::zero());
                }
            }
        }
        self
    }

    pub fn extract_audio(&self, audio: &AudioFrames<T>) -> Result<FeatureSequence<T>, FeatureError> {
        let Net::Audio(net) = &self.net else {
            return Err(FeatureError::WrongModality {
                expected: Modality::Audio,
                found: self.modality(),
            });
        };
        if audio.bins() != net.bins {
            return Err(FeatureError::MalformedInput(format!(
                "audio has {} spectral bins, extractor expects {}",
                audio.bins(),
                net.bins
            )));
        }
        let starts = audio_windows(audio.frames());
        let fan_in = net.bins * AUDIO_WINDOW;
        let mut window = vec![T::zero(); fan_in];
        let mut data = Vec::with_capacity(starts.len() * net.dim);
        for &s in &starts {
            for b in 0..net.bins {
                let row = audio.row(b);
                for j in 0..AUDIO_WINDOW {
                    window[b * AUDIO_WINDOW + j] = row.get(s + j).copied().unwrap_or_else(T::zero);
                }
            }
            let mut out = net.bias.clone();
            for (i, &x) in window.iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                let w = &net.weight[i * net.dim..(i + 1) * net.dim];
                for (o, &wv) in out.iter_mut().zip(w) {
                    *o = *o + x * wv;
                }
            }
            data.extend(out.into_iter().map(|v| v.tanh()));
        }
        FeatureSequence::new(Modality::Audio, starts.len(), net.dim, data)
    }

    pub fn extract_visual(&self, video: &VideoFrames) -> Result<FeatureSequence<T>, FeatureError> {
        let Net::Visual(net) = &self.net else {
            return Err(FeatureError::WrongModality {
                expected: Modality::Visual,
                found: self.modality(),
            });
        };
        if video.channels() != net.channels {
            return Err(FeatureError::MalformedInput(format!(
                "video has {} channels, extractor expects {}",
                video.channels(),
                net.channels
            )));
        }
        let (h, w) = (video.height(), video.width());
        let scale = T::one() / T::of(255.0);
        let dim = net.second.out_ch;
        let mut data = Vec::with_capacity(video.len() * dim);
        for frame in video.frames() {
            let input: Vec<T> = frame.iter().map(|&p| T::of(p as f64) * scale).collect();
            let (h1, w1, a1) = conv_stride2(&net.first, &input, h, w);
            let a1: Vec<T> = a1.into_iter().map(|v| v.max(T::zero())).collect();
            let (h2, w2, a2) = conv_stride2(&net.second, &a1, h1, w1);
            let area = T::of((h2 * w2) as f64);
            for plane in a2.chunks_exact(h2 * w2) {
                let total: T = plane.iter().map(|v| v.tanh()).sum();
                data.push(total / area);
            }
        }
        FeatureSequence::new(Modality::Visual, video.len(), dim, data)
    }
}

/// 3×3 convolution, stride 2, zero padding 1. Returns `(out_h, out_w, out)`.
fn conv_stride2<T: Scalar>(conv: &Conv<T>, input: &[T], h: usize, w: usize) -> (usize, usize, Vec<T>) {
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let mut out = Vec::with_capacity(conv.out_ch * oh * ow);
    for o in 0..conv.out_ch {
        let kernel = &conv.weight[o * conv.in_ch * 9..(o + 1) * conv.in_ch * 9];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = conv.bias[o];
                for c in 0..conv.in_ch {
                    let plane = &input[c * h * w..(c + 1) * h * w];
                    let kc = &kernel[c * 9..(c + 1) * 9];
                    for ky in 0..3 {
                        let iy = (2 * y + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let prow = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for kx in 0..3 {
                            let ix = (2 * x + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + kc[ky * 3 + kx] * prow[ix as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    (oh, ow, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audio(frames: usize) -> AudioFrames<f64> {
        let data = (0..4 * frames).map(|i| ((i * 13) % 7) as f64 / 7.0 - 0.5).collect();
        AudioFrames::new(4, frames, data, 10.0).unwrap()
    }

    fn video(n: usize) -> VideoFrames {
        let frames = (0..n)
            .map(|f| (0..3 * 8 * 8).map(|i| ((i * 31 + f * 17) % 256) as u8).collect())
            .collect();
        VideoFrames::new(3, 8, 8, frames, 5.0).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(audio_windows(8), vec![0]);
        assert_eq!(audio_windows(16), vec![0, 4, 8]);
        assert_eq!(audio_windows(3), vec![0]);
        assert_eq!(audio_windows(11), vec![0]);
        assert_eq!(audio_windows(12), vec![0, 4]);
    }

    #[test]
    fn audio_shapes_and_determinism() {
        let cfg = ExtractorConfig::default();
        let ex = Extractor::<f64>::toy_audio(4, &cfg, 3);
        let a = ex.extract_audio(&audio(8)).unwrap();
        assert_eq!((a.steps(), a.dim()), (1, 32));
        let b = ex.extract_audio(&audio(16)).unwrap();
        assert_eq!(b.steps(), 3);
        let again = Extractor::<f64>::toy_audio(4, &cfg, 3)
            .extract_audio(&audio(16))
            .unwrap();
        assert_eq!(b, again);
        let short = ex.extract_audio(&audio(2)).unwrap();
        assert_eq!(short.steps(), 1);
    }

    #[test]
    fn modality_mismatch() {
        let cfg = ExtractorConfig::default();
        let ex = Extractor::<f64>::toy_visual(3, &cfg, 3);
        assert!(matches!(
            ex.extract_audio(&audio(8)),
            Err(FeatureError::WrongModality { .. })
        ));
        let ex = Extractor::<f64>::toy_audio(5, &cfg, 3);
        assert!(matches!(
            ex.extract_audio(&audio(8)),
            Err(FeatureError::MalformedInput(_))
        ));
    }

    #[test]
    fn visual_rows_per_frame() {
        let cfg = ExtractorConfig::default();
        let ex = Extractor::<f64>::toy_visual(3, &cfg, 9);
        let f = ex.extract_visual(&video(1)).unwrap();
        assert_eq!((f.steps(), f.dim()), (1, 64));
        let f = ex.extract_visual(&video(5)).unwrap();
        assert_eq!(f.steps(), 5);
    }

    #[test]
    fn zero_frame_zero_bias_gives_zero_row() {
        let cfg = ExtractorConfig::default();
        let ex = Extractor::<f64>::toy_visual(3, &cfg, 9).with_zero_biases();
        let v = VideoFrames::new(3, 8, 8, vec![vec![0u8; 192]], 1.0).unwrap();
        let f = ex.extract_visual(&v).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn frame_permutation_permutes_rows() {
        let cfg = ExtractorConfig::default();
        let ex = Extractor::<f64>::toy_visual(3, &cfg, 9);
        let v = video(3);
        let order = [2usize, 0, 1];
        let permuted = VideoFrames::new(3, 8, 8, order.iter().map(|&i| v.frame(i).to_vec()).collect(), 5.0).unwrap();
        let a = ex.extract_visual(&v).unwrap();
        let b = ex.extract_visual(&permuted).unwrap();
        for (r, &src) in order.iter().enumerate() {
            assert_eq!(b.row(r), a.row(src));
        }
    }
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use distillcap::tensor::{Tape, Tensor, Var};

/// Rows of the published score table: BLEU-1..4, CIDEr, METEOR, ROUGE-L,
/// SPICE, printed SCORE, printed Diff.
pub const REFERENCE_SCORES: [(&str, [f64; 10]); 9] = [
    (
        "rep k=0.2",
        [0.722, 0.555, 0.422, 0.311, 0.267, 0.236, 0.554, 0.045, 0.321, 0.127],
    ),
    (
        "rep k=0.4",
        [0.715, 0.546, 0.411, 0.294, 0.223, 0.234, 0.539, 0.043, 0.306, 0.168],
    ),
    (
        "rep k=0.6",
        [0.709, 0.542, 0.412, 0.300, 0.232, 0.231, 0.543, 0.041, 0.308, 0.163],
    ),
    (
        "rep k=0.8",
        [0.719, 0.550, 0.413, 0.300, 0.256, 0.235, 0.545, 0.046, 0.315, 0.144],
    ),
    (
        "rep+ce k=0.2",
        [0.766, 0.613, 0.476, 0.357, 0.375, 0.256, 0.585, 0.054, 0.365, 0.008],
    ),
    (
        "rep+ce k=0.4",
        [0.774, 0.618, 0.473, 0.348, 0.359, 0.256, 0.582, 0.055, 0.361, 0.019],
    ),
    (
        "rep+ce k=0.6",
        [0.769, 0.616, 0.478, 0.357, 0.375, 0.258, 0.586, 0.055, 0.366, 0.005],
    ),
    (
        "rep+ce k=0.8",
        [0.765, 0.614, 0.479, 0.358, 0.366, 0.255, 0.583, 0.054, 0.362, 0.016],
    ),
    (
        "teacher",
        [0.760, 0.612, 0.473, 0.352, 0.397, 0.254, 0.583, 0.054, 0.368, 0.000],
    ),
];

pub const REFERENCE_METRIC_NAMES: [&str; 8] = [
    "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "CIDEr", "METEOR", "ROUGE-L", "SPICE",
];

/// Published mean extraction times (s) and Diff (%) per rate; k = 1 is the
/// teacher.
pub const REFERENCE_TIMINGS: [(f64, f64, f64); 4] = [
    (0.2, 2.77, 79.1),
    (0.4, 5.65, 57.4),
    (0.6, 8.31, 37.4),
    (0.8, 11.03, 16.9),
];
pub const REFERENCE_TEACHER_TIME: f64 = 13.28;

/// Spectral pooling of one real row by direct O(N^2) DFT sums.
pub fn naive_spectral_pool(row: &[f64], m: usize) -> Vec<f64> {
    let n = row.len();
    let dft = |f: isize| -> (f64, f64) {
        row.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &x)| {
            let angle = -2.0 * PI * f as f64 * t as f64 / n as f64;
            (re + x * angle.cos(), im + x * angle.sin())
        })
    };
    let lo = -((m / 2) as isize);
    let bins: Vec<(isize, f64, f64)> = (lo..lo + m as isize)
        .map(|f| {
            let (re, im) = dft(f);
            // The unpaired -M/2 bin of an even crop keeps only its real part.
            if m % 2 == 0 && f == lo && m < n {
                (f, re, 0.0)
            } else {
                (f, re, im)
            }
        })
        .collect();
    (0..m)
        .map(|j| {
            bins.iter()
                .map(|&(f, re, im)| {
                    let angle = 2.0 * PI * f as f64 * j as f64 / m as f64;
                    re * angle.cos() - im * angle.sin()
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error between tape gradients and central differences
/// over every element of every input. `build` must be deterministic.
pub fn check_gradients(inputs: &[Tensor<f64>], build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).expect("scalar loss");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let eval = |inputs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x = inputs[i].data()[j];
            probe[i].data_mut()[j] = x + FD_STEP;
            let up = eval(&probe);
            probe[i].data_mut()[j] = x - FD_STEP;
            let down = eval(&probe);
            probe[i].data_mut()[j] = x;
            worst = worst.max(rel_err(analytic[i][j], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<Vec<String>, f64> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Plain CIDEr computed term by term over an explicit vocabulary of n-grams.
pub fn brute_force_cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64 {
    let videos = references.len() as f64;
    let mut per_video = vec![0.0; references.len()];
    for n in 1..=4 {
        let mut all: HashSet<Vec<String>> = HashSet::new();
        for refs in references {
            for r in refs {
                all.extend(ngrams(r, n).into_keys());
            }
        }
        for c in candidates {
            all.extend(ngrams(c, n).into_keys());
        }
        let all: Vec<Vec<String>> = all.into_iter().collect();
        let idf: Vec<f64> = all
            .iter()
            .map(|g| {
                let df = references
                    .iter()
                    .filter(|refs| refs.iter().any(|r| ngrams(r, n).contains_key(g)))
                    .count();
                (videos / (df.max(1) as f64)).ln()
            })
            .collect();
        let vector = |tokens: &[String]| -> Vec<f64> {
            let counts = ngrams(tokens, n);
            all.iter()
                .zip(&idf)
                .map(|(g, w)| counts.get(g).copied().unwrap_or(0.0) * w)
                .collect()
        };
        for (v, (c, refs)) in candidates.iter().zip(references).enumerate() {
            let vc = vector(c);
            let mut sum = 0.0;
            for r in refs {
                let vr = vector(r);
                let dot: f64 = vc.iter().zip(&vr).map(|(a, b)| a * b).sum();
                let na = vc.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nb = vr.iter().map(|b| b * b).sum::<f64>().sqrt();
                if na > 0.0 && nb > 0.0 {
                    sum += dot / (na * nb);
                }
            }
            per_video[v] += sum / refs.len() as f64 / 4.0;
        }
    }
    10.0 * per_video.iter().sum::<f64>() / videos
}

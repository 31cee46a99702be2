use std::collections::{BTreeMap, BTreeSet};

use super::bleu::ngram_counts;
use super::{check_corpus, MetricError};

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SCALE: f64 = 10.0;

// Ordered maps keep every floating-point reduction in a fixed order.
type Vector<'a> = BTreeMap<&'a [String], f64>;

fn norm(v: &Vector<'_>) -> f64 {
    v.values().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &Vector<'_>, b: &Vector<'_>) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// Cosine similarities `terms[video][n - 1]`, each already averaged over the
/// video's references.
pub fn cider_terms(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<Vec<[f64; CIDER_MAX_N]>, MetricError> {
    check_corpus(candidates, references)?;
    let videos = candidates.len();
    if videos < 2 {
        return Err(MetricError::UndefinedMetric(format!(
            "CIDEr needs at least 2 videos, got {videos}"
        )));
    }
    let mut idf: Vec<BTreeMap<&[String], f64>> = Vec::with_capacity(CIDER_MAX_N);
    let mut informative = false;
    for n in 1..=CIDER_MAX_N {
        let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
        for refs in references {
            let grams: BTreeSet<&[String]> = refs.iter().flat_map(|r| r.windows(n)).collect();
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        informative |= df.values().any(|&d| d < videos);
        idf.push(
            df.into_iter()
                .map(|(g, d)| (g, (videos as f64 / d as f64).ln()))
                .collect(),
        );
    }
    if !informative {
        return Err(MetricError::UndefinedMetric(
            "every reference n-gram occurs in every video, so all IDF weights are zero".into(),
        ));
    }
    let full_idf = (videos as f64).ln();
    let weigh = |tokens: &'_ [String], n: usize, table: &BTreeMap<&[String], f64>| -> BTreeMap<Vec<String>, f64> {
        ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, c)| (g.to_vec(), c as f64 * table.get(g).copied().unwrap_or(full_idf)))
            .collect()
    };

    let mut out = Vec::with_capacity(videos);
    for (cand, refs) in candidates.iter().zip(references) {
        let mut per_n = [0.0; CIDER_MAX_N];
        for (n, slot) in per_n.iter_mut().enumerate() {
            let table = &idf[n];
            let owned_c = weigh(cand, n + 1, table);
            let vc: Vector<'_> = owned_c.iter().map(|(g, v)| (g.as_slice(), *v)).collect();
            let mut total = 0.0;
            for r in refs {
                let owned_r = weigh(r, n + 1, table);
                let vr: Vector<'_> = owned_r.iter().map(|(g, v)| (g.as_slice(), *v)).collect();
                total += cosine(&vc, &vr);
            }
            *slot = total / refs.len() as f64;
        }
        out.push(per_n);
    }
    Ok(out)
}

/// Mean over videos and n-gram orders, times 10.
pub fn aggregate_cider(terms: &[[f64; CIDER_MAX_N]]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let total: f64 = terms.iter().map(|t| t.iter().sum::<f64>() / CIDER_MAX_N as f64).sum();
    CIDER_SCALE * total / terms.len() as f64
}

/// Corpus CIDEr (plain TF-IDF cosine, no length penalty), in `[0, 10]`.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64, MetricError> {
    Ok(aggregate_cider(&cider_terms(candidates, references)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::tokenize;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn zero_overlap_is_zero() {
        let c = vec![t("q r s"), t("u v w")];
        let r = vec![vec![t("a b c")], vec![t("d e f")]];
        assert_eq!(cider(&c, &r).unwrap(), 0.0);
    }

    #[test]
    fn perfect_distinct_captions_hit_ten() {
        let c = vec![t("a b c d e"), t("f g h i j")];
        let r = vec![vec![c[0].clone()], vec![c[1].clone()]];
        assert!((cider(&c, &r).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_corpus_is_undefined() {
        let c = vec![t("a b"), t("a b")];
        let r = vec![vec![t("a b")], vec![t("a b")]];
        assert!(matches!(cider(&c, &r), Err(MetricError::UndefinedMetric(_))));
        assert!(matches!(cider(&c[..1], &r[..1]), Err(MetricError::UndefinedMetric(_))));
    }

    #[test]
    fn doubling_terms_doubles_score() {
        let terms = vec![[0.1, 0.2, 0.0, 0.4], [0.3, 0.0, 0.25, 0.05]];
        let doubled: Vec<_> = terms.iter().map(|t| t.map(|x| 2.0 * x)).collect();
        assert!((aggregate_cider(&doubled) - 2.0 * aggregate_cider(&terms)).abs() < 1e-15);
    }
}

use std::collections::HashMap;

use super::{check_corpus, MetricError};

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Reference length closest to `len`; ties go to the shorter reference.
fn closest_ref_len(len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

/// Corpus BLEU-`n`: clipped n-gram counts and lengths are summed over the
/// corpus before the precisions and brevity penalty are formed. No smoothing,
/// so any order with zero matches yields 0.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], n: usize) -> Result<f64, MetricError> {
    if !(1..=4).contains(&n) {
        return Err(MetricError::InvalidOrder(n));
    }
    check_corpus(candidates, references)?;
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), refs);
        for order in 1..=n {
            let counts = ngram_counts(cand, order);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, order) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in counts {
                matched[order - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[order - 1] += c;
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for (m, t) in matched.iter().zip(&total) {
        if *m == 0 || *t == 0 {
            return Ok(0.0);
        }
        log_sum += (*m as f64 / *t as f64).ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * (log_sum / n as f64).exp())
}

/// BLEU-`n` of a single candidate (a one-item corpus).
pub fn bleu_n(candidate: &[String], references: &[Vec<String>], n: usize) -> Result<f64, MetricError> {
    corpus_bleu(&[candidate.to_vec()], &[references.to_vec()], n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::tokenize;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identity_scores_one() {
        let c = t("a man is singing a song");
        for n in 1..=4 {
            assert_eq!(bleu_n(&c, &[c.clone()], n).unwrap(), 1.0);
        }
    }

    #[test]
    fn clipped_unigram_hand_case() {
        let v = bleu_n(&t("a a a"), &[t("a b")], 1).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_overlap_is_zero() {
        assert_eq!(bleu_n(&t("x y z"), &[t("a b c")], 1).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_applies() {
        // c = 2, r = 4: BP = exp(1 - 2) with unigram precision 1.
        let v = bleu_n(&t("a b"), &[t("a b c d")], 1).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn short_candidate_has_no_higher_orders() {
        assert_eq!(bleu_n(&t("a"), &[t("a")], 2).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(bleu_n(&t("a"), &[], 1), Err(MetricError::EmptyReferences(0))));
        assert!(matches!(
            bleu_n(&t("a"), &[t("a")], 5),
            Err(MetricError::InvalidOrder(5))
        ));
    }
}

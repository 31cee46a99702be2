use super::{check_corpus, MetricError};

pub const ROUGE_BETA: f64 = 1.2;

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn f_measure(cand: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(cand, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// ROUGE-L F-measure of one candidate, maximised over its references.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::EmptyReferences(0));
    }
    Ok(references.iter().map(|r| f_measure(candidate, r)).fold(0.0, f64::max))
}

/// Mean per-video ROUGE-L.
pub fn corpus_rouge_l(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64, MetricError> {
    check_corpus(candidates, references)?;
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        total += rouge_l(c, r)?;
    }
    Ok(total / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::tokenize;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn examples() {
        assert_eq!(rouge_l(&t("a b c"), &[t("a b c")]).unwrap(), 1.0);
        let v = rouge_l(&t("a b c"), &[t("a c d")]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l(&t("a b"), &[t("c d")]).unwrap(), 0.0);
        assert!(rouge_l(&t("a"), &[]).is_err());
    }

    #[test]
    fn unequal_precision_recall_uses_beta() {
        // LCS 2, P = 1, R = 0.5.
        let v = rouge_l(&t("a b"), &[t("a x b y")]).unwrap();
        let b2 = ROUGE_BETA * ROUGE_BETA;
        assert!((v - (1.0 + b2) * 0.5 / (0.5 + b2)).abs() < 1e-15);
    }

    #[test]
    fn lcs_known_value() {
        assert_eq!(lcs_len(&t("a b c b d a b"), &t("b d c a b a")), 4);
    }
}

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::DataError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Reserved token names. Brackets are punctuation, so no tokenized word can
/// collide with them.
pub const RESERVED: [&str; 4] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub min_freq: usize,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_freq` times, ordered by descending
    /// frequency then ascending token, after the four reserved slots.
    pub fn build<'a, I, C>(corpus: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for caption in corpus {
            for tok in caption {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens, min_freq)
    }

    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `BOS tokens… EOS`, unknown words mapped to UNK.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(tokens.iter().map(|t| self.id(t)))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Words of a caption, dropping PAD/BOS and stopping at EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .copied()
            .take_while(|&i| i != EOS)
            .filter(|&i| i != PAD && i != BOS)
            .filter_map(|i| self.token(i).map(str::to_owned))
            .collect()
    }

    /// One token per line, in index order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, DataError> {
        let tokens = r.lines().collect::<Result<Vec<_>, _>>()?;
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(DataError::Vocabulary("missing reserved tokens".into()));
        }
        let v = Self::from_tokens(tokens, 1);
        if v.index.len() != v.tokens.len() {
            return Err(DataError::Vocabulary("duplicate token".into()));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::tokenize;
    use proptest::prelude::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn ordering_rule() {
        let c = corpus(&["a b", "a"]);
        let v = Vocabulary::build(&c, 1);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        assert_eq!(v.len(), 6);

        let v = Vocabulary::build(&c, 2);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.encode(&c[0]), vec![BOS, 4, UNK, EOS]);
    }

    #[test]
    fn ties_break_alphabetically() {
        let v = Vocabulary::build(&corpus(&["z y x", "y"]), 1);
        assert_eq!([v.id("y"), v.id("x"), v.id("z")], [4, 5, 6]);
    }

    #[test]
    fn empty_corpus_has_reserved_only() {
        let v = Vocabulary::build(Vec::<Vec<String>>::new().iter(), 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(EOS), Some("[EOS]"));
    }

    #[test]
    fn reserved_never_tokenized() {
        for r in RESERVED {
            assert_ne!(tokenize(r), vec![r.to_string()]);
        }
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build(&corpus(&["the cat sat", "the dog"]), 1);
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let back = Vocabulary::read(buf.as_slice()).unwrap();
        assert_eq!(
            back.decode(&back.encode(&tokenize("the dog sat"))),
            ["the", "dog", "sat"]
        );
        assert!(Vocabulary::read(&b"a\nb\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(words in prop::collection::vec(0usize..6, 0..12)) {
            let lexicon = ["man", "dog", "runs", "a", "red", "car"];
            let v = Vocabulary::build(&corpus(&["man dog runs a red car"]), 1);
            let caption: Vec<String> = words.iter().map(|&i| lexicon[i].to_string()).collect();
            let ids = v.encode(&caption);
            prop_assert_eq!(v.decode(&ids), caption.clone());
            let again: Vec<String> = v.decode(&ids);
            prop_assert_eq!(v.encode(&again), ids);
        }
    }
}

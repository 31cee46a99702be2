use std::sync::OnceLock;

use regex::Regex;

use super::DataError;

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("valid pattern"))
}

/// Lower-cases, strips Unicode punctuation, and splits on whitespace runs.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    punctuation()
        .replace_all(&lowered, "")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// [`tokenize`] for raw bytes that must be UTF-8.
pub fn tokenize_bytes(raw: &[u8]) -> Result<Vec<String>, DataError> {
    let text = std::str::from_utf8(raw).map_err(|e| DataError::Encoding(e.to_string()))?;
    Ok(tokenize(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("A man, is singing."), ["a", "man", "is", "singing"]);
        assert!(tokenize("!!!").is_empty());
        assert_eq!(tokenize("  Two   dogs "), ["two", "dogs"]);
        assert_eq!(tokenize("«Über» café—déjà vu…"), ["über", "cafédéjà", "vu"]);
    }

    #[test]
    fn invalid_utf8_rejected() {
        assert!(matches!(tokenize_bytes(&[0x61, 0xff]), Err(DataError::Encoding(_))));
        assert_eq!(tokenize_bytes(b"Hi there").unwrap(), ["hi", "there"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "\\PC{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}

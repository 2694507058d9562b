//! Hashtag normalization shared by the lexicon and the corpus.

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashtagError {
    #[error("empty hashtag")]
    Empty,
    #[error("hashtag {0:?} contains whitespace")]
    Whitespace(String),
    #[error("hashtag {0:?} contains an embedded '#'")]
    EmbeddedHash(String),
}

/// Normalizes a raw hashtag: strips leading `#`, applies NFC and lowercases.
///
/// The result must be a non-empty token without whitespace or `#`.
pub fn normalize_hashtag(raw: &str) -> Result<String, HashtagError> {
    let stripped = raw.trim_start_matches('#');
    let text: String = stripped.nfc().collect::<String>().to_lowercase();
    // Lowercasing can leave a non-NFC sequence behind for a few code points.
    let text: String = text.nfc().collect();
    validate_tag(&text)?;
    Ok(text)
}

/// Checks the term-text rules without transforming anything.
pub fn validate_tag(text: &str) -> Result<(), HashtagError> {
    if text.is_empty() {
        return Err(HashtagError::Empty);
    }
    if text.chars().any(char::is_whitespace) {
        return Err(HashtagError::Whitespace(text.to_string()));
    }
    if text.contains('#') {
        return Err(HashtagError::EmbeddedHash(text.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_hash_and_folds_case() {
        assert_eq!(normalize_hashtag("#420").unwrap(), "420");
        assert_eq!(normalize_hashtag("KUSH").unwrap(), "kush");
        assert_eq!(normalize_hashtag("##WeedPorn").unwrap(), "weedporn");
    }

    #[test]
    fn rejects_whitespace() {
        assert!(matches!(
            normalize_hashtag("#Weed Porn"),
            Err(HashtagError::Whitespace(_))
        ));
        assert!(matches!(normalize_hashtag("tab\there"), Err(HashtagError::Whitespace(_))));
    }

    #[test]
    fn rejects_empty_and_embedded_hash() {
        assert_eq!(normalize_hashtag("#"), Err(HashtagError::Empty));
        assert_eq!(normalize_hashtag(""), Err(HashtagError::Empty));
        assert!(matches!(normalize_hashtag("a#b"), Err(HashtagError::EmbeddedHash(_))));
    }

    #[test]
    fn composes_to_nfc() {
        // "e" + combining acute accent composes to U+00E9.
        let decomposed = "caf\u{0065}\u{0301}";
        assert_eq!(normalize_hashtag(decomposed).unwrap(), "caf\u{00e9}");
        assert_eq!(normalize_hashtag("CAF\u{00c9}").unwrap(), "caf\u{00e9}");
    }
}

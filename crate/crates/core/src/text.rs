//! Deterministic tokenization shared by chunking, indexing and the metrics.
//!
//! A token is a maximal run of Unicode alphanumeric characters. Index terms are
//! the lowercased tokens. Nothing here depends on a language model vocabulary,
//! so counts are reproducible across platforms and implementations.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Byte spans `[start, end)` of every token in `text`, in order.
pub fn token_spans(text: &str) -> TokenSpans<'_> {
    TokenSpans {
        text,
        chars: text.char_indices(),
    }
}

pub struct TokenSpans<'a> {
    text: &'a str,
    chars: core::str::CharIndices<'a>,
}

impl Iterator for TokenSpans<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        let start = loop {
            let (i, c) = self.chars.next()?;
            if c.is_alphanumeric() {
                break i;
            }
        };
        for (i, c) in self.chars.by_ref() {
            if !c.is_alphanumeric() {
                return Some((start, i));
            }
        }
        Some((start, self.text.len()))
    }
}

/// Number of alphanumeric runs in `text`.
pub fn count_tokens(text: &str) -> usize {
    token_spans(text).count()
}

/// Lowercased index terms of `text`, in order, with repetitions.
pub fn terms(text: &str) -> Vec<String> {
    token_spans(text).map(|(s, e)| text[s..e].to_lowercase()).collect()
}

/// Distinct lowercased index terms of `text`.
pub fn term_set(text: &str) -> BTreeSet<String> {
    token_spans(text).map(|(s, e)| text[s..e].to_lowercase()).collect()
}

/// Splits `text` after sentence terminators (`.`, `!`, `?`, newline).
///
/// Returns byte ranges that tile `text` exactly. Runs of consecutive
/// terminators stay attached to the sentence they close.
pub fn sentence_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if is_terminator(c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if is_terminator(d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            out.push((start, end));
            start = end;
        }
    }
    if start < text.len() {
        out.push((start, text.len()));
    }
    out
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_alphanumeric_runs() {
        assert_eq!(count_tokens("hello world"), 2);
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("pH=7.0"), 3);
        assert_eq!(count_tokens("  ,;-- "), 0);
        assert_eq!(count_tokens("température 60 °C"), 3);
    }

    #[test]
    fn terms_are_lowercased() {
        assert_eq!(terms("Ion CHROMATOGRAPHY, ion"), ["ion", "chromatography", "ion"]);
        assert_eq!(term_set("A a b").len(), 2);
    }

    #[test]
    fn sentence_ranges_tile_the_text() {
        let text = "One. Two!! Three?\nFour";
        let ranges = sentence_ranges(text);
        let parts: Vec<&str> = ranges.iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(parts, ["One.", " Two!!", " Three?\n", "Four"]);
        assert_eq!(parts.concat(), text);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}

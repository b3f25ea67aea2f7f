//! Approximate tokenizer and rule-based sentence splitter.
//!
//! Token counts are an approximation of a model tokenizer: whitespace
//! separates tokens, every punctuation character is its own token, and an
//! alphanumeric run counts as `ceil(len / chars_per_subword)` tokens (the
//! calibration constant; `0` counts each run as a single token). The same
//! pieces drive chunk budgets, context budgets and hard splits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Characters per subword piece inside an alphanumeric run; 0 disables
    /// subword splitting.
    pub chars_per_subword: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            chars_per_subword: 8,
        }
    }
}

impl TokenizerConfig {
    /// Byte ranges of the token pieces of `text`, in order.
    pub fn pieces(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut run_start: Option<usize> = None;
        let mut run_chars = 0usize;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                if let (Some(s), true) = (run_start, self.chars_per_subword > 0) {
                    if run_chars == self.chars_per_subword {
                        out.push(s..i);
                        run_start = Some(i);
                        run_chars = 0;
                    }
                }
                if run_start.is_none() {
                    run_start = Some(i);
                    run_chars = 0;
                }
                run_chars += 1;
                continue;
            }
            if let Some(s) = run_start.take() {
                out.push(s..i);
            }
            if !c.is_whitespace() {
                out.push(i..i + c.len_utf8());
            }
        }
        if let Some(s) = run_start {
            out.push(s..text.len());
        }
        out
    }

    pub fn count(&self, text: &str) -> usize {
        self.pieces(text).len()
    }
}

/// Lowercased alphanumeric runs; the term vocabulary for lexical scoring
/// and the stub embedder.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "inc", "ltd", "co", "corp", "jr", "sr", "st", "vs", "etc",
    "no", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "e.g", "i.e", "u.s", "u.k",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if w.chars().count() == 1 && w.chars().all(|c| c.is_alphabetic()) {
        // single initial, as in "J. Smith"
        return true;
    }
    ABBREVIATIONS.contains(&w.as_str())
}

/// Split into sentences. The returned byte ranges are contiguous and cover
/// `text` exactly; each sentence keeps its trailing whitespace.
pub fn split_sentences(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary_end = match c {
            '.' | '!' | '?' => {
                let mut j = i + 1;
                while j < bytes.len() && matches!(bytes[j], b'"' | b'\'' | b')' | b']') {
                    j += 1;
                }
                let followed_by_space = j >= bytes.len() || (bytes[j] as char).is_whitespace();
                if !followed_by_space || (c == '.' && is_abbreviation(last_word(&text[start..i]))) {
                    None
                } else {
                    Some(j)
                }
            }
            '\n' if bytes.get(i + 1) == Some(&b'\n') => Some(i),
            _ => None,
        };
        if let Some(mut j) = boundary_end {
            while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                j += 1;
            }
            if text[start..j].trim().is_empty() {
                continue;
            }
            out.push(start..j);
            start = j;
            while chars.peek().is_some_and(|(k, _)| *k < j) {
                chars.next();
            }
        }
    }
    if start < text.len() {
        if text[start..].trim().is_empty() {
            if let Some(last) = out.last_mut() {
                last.end = text.len();
            } else {
                out.push(start..text.len());
            }
        } else {
            out.push(start..text.len());
        }
    }
    out
}

fn last_word(s: &str) -> &str {
    s.rsplit(|c: char| c.is_whitespace()).next().unwrap_or("")
}

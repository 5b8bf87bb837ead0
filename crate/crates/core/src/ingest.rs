//! Sentence segmentation, normalization and stopword classification.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en_v1.txt");

/// Source id of the packaged stopword list.
pub const DEFAULT_STOPWORDS_SOURCE: &str = "en-v1";

/// A normalized sentence together with the raw text it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(raw: impl Into<String>) -> Self {
        normalize(&raw.into())
    }

    /// Sentence whose raw text is its tokens joined by single spaces.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Sentence {
            raw: tokens.join(" "),
            tokens,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Split raw prose at sentence-final punctuation followed by whitespace and
/// at newlines. Segments are trimmed; blank segments are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let end = match c {
            '\n' | '\r' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                Some(&(_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = end {
            push_segment(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_segment(&mut out, &text[start..]);
    out
}

fn push_segment(out: &mut Vec<String>, seg: &str) {
    let seg = seg.trim();
    if !seg.is_empty() {
        out.push(seg.to_string());
    }
}

fn apostrophes() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"['\u{2018}\u{2019}\u{02BC}]").unwrap())
}

/// Unicode punctuation plus the ASCII symbols `~ @ # $ % ^ & * ( ) _ + = | \ / < >`.
fn strip_set() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}~@#$%^&*()_+=|\\/<>]").unwrap())
}

/// Lowercase, delete apostrophes, replace every other strip-set character
/// with a space and split on whitespace. Tokens without any alphanumeric
/// character are dropped.
pub fn normalize(raw: &str) -> Sentence {
    Sentence {
        raw: raw.to_string(),
        tokens: tokenize(raw),
    }
}

pub fn tokenize(raw: &str) -> Vec<String> {
    let lower = raw.to_lowercase();
    let merged = apostrophes().replace_all(&lower, "");
    let spaced = strip_set().replace_all(&merged, " ");
    spaced
        .split_whitespace()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

/// Normalize each raw sentence, dropping those that yield no tokens.
pub fn normalize_all<I, S>(raws: I) -> Vec<Sentence>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    raws.into_iter()
        .map(|r| normalize(r.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Read a corpus file, either one sentence per line or prose passed through
/// [`split_sentences`]. Lines that normalize to nothing are dropped.
pub fn read_corpus(path: &Path, one_per_line: bool) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text, one_per_line))
}

pub fn parse_corpus(text: &str, one_per_line: bool) -> Vec<Sentence> {
    if one_per_line {
        normalize_all(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    } else {
        normalize_all(split_sentences(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordSet {
    words: BTreeSet<String>,
    source: String,
}

impl Default for StopwordSet {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS, DEFAULT_STOPWORDS_SOURCE)
    }
}

impl StopwordSet {
    /// One word per line; blank lines and `#` comments are ignored. Words are
    /// passed through the token normalizer so they compare equal to tokens.
    pub fn parse(text: &str, source: impl Into<String>) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(tokenize)
            .collect();
        StopwordSet {
            words,
            source: source.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text, format!("file:{}", path.display())))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// True iff every token is a stopword.
    pub fn is_stopword_only<S: AsRef<str>>(&self, ngram: &[S]) -> bool {
        ngram.iter().all(|t| self.contains(t.as_ref()))
    }
}

//! Wildcard patterns of frequent n-grams.
//!
//! A sentence is decomposed by keeping every style n-gram it contains, longest
//! first, and replacing each maximal run of remaining tokens with `*`. The
//! tokens behind the wildcards form the sentence's context. Each pattern keeps
//! the list of contexts it was seen with and the original sentences.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::embedding::{mean, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{normalize, Sentence};
use crate::miner::NGram;

/// Format version of [`StoreSnapshot`].
pub const STORE_VERSION: u32 = 1;

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Wildcard,
    Fixed { tokens: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    segments: Vec<Segment>,
}

impl Pattern {
    /// Validates the alternation: at least one fixed segment, no two adjacent
    /// segments of the same kind, no empty fixed segment.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidState(format!("invalid pattern: {m}")));
        if !segments.iter().any(|s| matches!(s, Segment::Fixed { .. })) {
            return bad("no fixed segment");
        }
        for pair in segments.windows(2) {
            if std::mem::discriminant(&pair[0]) == std::mem::discriminant(&pair[1]) {
                return bad("adjacent segments of the same kind");
            }
        }
        if segments
            .iter()
            .any(|s| matches!(s, Segment::Fixed { tokens } if tokens.is_empty()))
        {
            return bad("empty fixed segment");
        }
        Ok(Pattern { segments })
    }

    /// Parse canonical text such as `"* try my best to *"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for tok in text.split_whitespace() {
            if tok == WILDCARD {
                segments.push(Segment::Wildcard);
            } else if let Some(Segment::Fixed { tokens }) = segments.last_mut() {
                tokens.push(tok.to_string());
            } else {
                segments.push(Segment::Fixed {
                    tokens: vec![tok.to_string()],
                });
            }
        }
        Self::from_segments(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn canonical_text(&self) -> String {
        self.to_string()
    }

    pub fn wildcard_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Wildcard))
            .count()
    }

    pub fn fixed_segments(&self) -> impl Iterator<Item = &[String]> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Fixed { tokens } => Some(tokens.as_slice()),
            Segment::Wildcard => None,
        })
    }

    /// Fill the wildcard slots in order.
    pub fn fill<'a, I>(&self, slots: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut slots = slots.into_iter();
        let mut out = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Fixed { tokens } => out.extend(tokens.iter().cloned()),
                Segment::Wildcard => {
                    if let Some(fill) = slots.next() {
                        out.extend(fill.iter().cloned());
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .segments
            .iter()
            .map(|s| match s {
                Segment::Wildcard => WILDCARD.to_string(),
                Segment::Fixed { tokens } => tokens.join(" "),
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Tokens behind a pattern's wildcards, with the length of each slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Context {
    pub tokens: Vec<String>,
    pub slot_lengths: Vec<usize>,
}

impl Context {
    /// Re-interleave the context into `pattern`, reproducing the original
    /// token sequence.
    pub fn interleave(&self, pattern: &Pattern) -> Result<Vec<String>> {
        if self.slot_lengths.len() != pattern.wildcard_count()
            || self.slot_lengths.iter().sum::<usize>() != self.tokens.len()
        {
            return Err(Error::InvalidState(format!(
                "context does not fit pattern {pattern}"
            )));
        }
        let mut start = 0;
        let slots = self.slot_lengths.iter().map(|&n| {
            let s = &self.tokens[start..start + n];
            start += n;
            s
        });
        Ok(pattern.fill(slots))
    }
}

/// Style n-grams grouped by length for window lookup.
#[derive(Debug, Clone, Default)]
pub struct StyleIndex {
    by_len: BTreeMap<usize, HashSet<Vec<String>>>,
}

impl StyleIndex {
    /// N-grams shorter than two tokens are ignored.
    pub fn new<'a, I: IntoIterator<Item = &'a NGram>>(style: I) -> Self {
        let mut by_len: BTreeMap<usize, HashSet<Vec<String>>> = BTreeMap::new();
        for g in style {
            if g.len() >= 2 {
                by_len.entry(g.len()).or_default().insert(g.tokens().to_vec());
            }
        }
        StyleIndex { by_len }
    }

    pub fn is_empty(&self) -> bool {
        self.by_len.is_empty()
    }
}

/// Split `sentence` into a pattern and its context. Matching is greedy by
/// descending n-gram length, then leftmost position; a match may not overlap
/// an earlier one. Adjacent matches merge into one fixed segment. Returns
/// `None` when no style n-gram occurs.
pub fn decompose(sentence: &Sentence, style: &StyleIndex) -> Option<(Pattern, Context)> {
    let tokens = &sentence.tokens;
    let n = tokens.len();
    let mut matched = vec![false; n];
    let mut any = false;
    for (&len, set) in style.by_len.iter().rev() {
        if len > n {
            continue;
        }
        let mut i = 0;
        while i + len <= n {
            if !matched[i..i + len].iter().any(|&m| m) && set.contains(&tokens[i..i + len]) {
                matched[i..i + len].iter_mut().for_each(|m| *m = true);
                any = true;
                i += len;
            } else {
                i += 1;
            }
        }
    }
    if !any {
        return None;
    }

    let mut segments = Vec::new();
    let mut context = Context {
        tokens: Vec::new(),
        slot_lengths: Vec::new(),
    };
    let mut i = 0;
    while i < n {
        let kind = matched[i];
        let start = i;
        while i < n && matched[i] == kind {
            i += 1;
        }
        let run = &tokens[start..i];
        if kind {
            segments.push(Segment::Fixed {
                tokens: run.to_vec(),
            });
        } else {
            segments.push(Segment::Wildcard);
            context.tokens.extend(run.iter().cloned());
            context.slot_lengths.push(run.len());
        }
    }
    Some((Pattern { segments }, context))
}

/// Mean context and original-sentence vectors of one record under one
/// embedder.
#[derive(Debug, Clone)]
pub struct MeanVectors {
    pub fingerprint: String,
    pub context: EmbeddingVector,
    pub original: EmbeddingVector,
}

/// A pattern with its contexts and original sentences.
#[derive(Debug, Clone)]
pub struct PatternRecord {
    pattern: Pattern,
    contexts: Vec<Context>,
    originals: Vec<Sentence>,
    means: OnceLock<Arc<MeanVectors>>,
}

impl PatternRecord {
    fn new(pattern: Pattern) -> Self {
        PatternRecord {
            pattern,
            contexts: Vec::new(),
            originals: Vec::new(),
            means: OnceLock::new(),
        }
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn originals(&self) -> &[Sentence] {
        &self.originals
    }

    /// Patterns without a wildcard cannot receive an insertion.
    pub fn is_insertable(&self) -> bool {
        self.pattern.wildcard_count() > 0
    }

    fn push(&mut self, context: Context, original: Sentence) {
        self.contexts.push(context);
        self.originals.push(original);
        self.means = OnceLock::new();
    }

    /// Mean context vector and mean original vector, cached per embedder
    /// fingerprint.
    pub fn means(&self, embedder: &dyn Embedder) -> Result<Arc<MeanVectors>> {
        let fingerprint = embedder.fingerprint();
        if let Some(m) = self.means.get() {
            if m.fingerprint == fingerprint {
                return Ok(m.clone());
            }
        }
        if !self.is_insertable() {
            return Err(Error::DegeneratePattern(format!(
                "{} has no wildcard",
                self.pattern
            )));
        }
        let ctx: Vec<EmbeddingVector> = self
            .contexts
            .iter()
            .map(|c| embedder.embed(&c.tokens))
            .collect::<Result<_>>()?;
        let orig: Vec<EmbeddingVector> = self
            .originals
            .iter()
            .map(|s| embedder.embed(&s.tokens))
            .collect::<Result<_>>()?;
        let m = Arc::new(MeanVectors {
            fingerprint,
            context: mean(&ctx)?,
            original: mean(&orig)?,
        });
        let _ = self.means.set(m.clone());
        Ok(m)
    }
}

/// Patterns keyed by canonical text.
#[derive(Debug, Clone, Default)]
pub struct PatternStore {
    records: BTreeMap<String, PatternRecord>,
}

impl PatternStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upsert(&mut self, pattern: Pattern, context: Context, original: Sentence) {
        self.records
            .entry(pattern.canonical_text())
            .or_insert_with(|| PatternRecord::new(pattern))
            .push(context, original);
    }

    /// Decompose `sentences` and upsert the results in order.
    pub fn ingest(&mut self, sentences: &[Sentence], style: &StyleIndex, exec: Exec) -> usize {
        if style.is_empty() {
            return 0;
        }
        let parts = exec.map(sentences, |s| decompose(s, style));
        let mut added = 0;
        for (s, part) in sentences.iter().zip(parts) {
            if let Some((p, c)) = part {
                self.upsert(p, c, s.clone());
                added += 1;
            }
        }
        added
    }

    /// Store over the whole corpus under the current style set.
    pub fn rebuild(corpus: &[Sentence], style: &BTreeSet<NGram>, exec: Exec) -> Self {
        let mut store = PatternStore::new();
        store.ingest(corpus, &StyleIndex::new(style), exec);
        store
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, canonical_text: &str) -> Option<&PatternRecord> {
        self.records.get(canonical_text)
    }

    /// Records in canonical-text order.
    pub fn records(&self) -> impl Iterator<Item = &PatternRecord> {
        self.records.values()
    }

    /// Every stored (canonical text, context) pair, sorted.
    pub fn instances(&self) -> Vec<(String, Context)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .flat_map(|(k, r)| r.contexts.iter().map(move |c| (k.clone(), c.clone())))
            .collect();
        v.sort();
        v
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            version: STORE_VERSION,
            patterns: self
                .records
                .iter()
                .map(|(k, r)| PatternExport {
                    canonical_text: k.clone(),
                    segments: r.pattern.segments.clone(),
                    contexts: r.contexts.clone(),
                    originals: r.originals.iter().map(|s| s.raw.clone()).collect(),
                })
                .collect(),
        }
    }

    /// Rebuild from a snapshot, re-normalizing originals and checking that
    /// every context re-interleaves into its original.
    pub fn from_snapshot(snap: StoreSnapshot) -> Result<Self> {
        if snap.version != STORE_VERSION {
            return Err(Error::VersionMismatch {
                found: snap.version,
                expected: STORE_VERSION,
            });
        }
        let mut store = PatternStore::new();
        for p in snap.patterns {
            let pattern = Pattern::from_segments(p.segments)?;
            if pattern.canonical_text() != p.canonical_text {
                return Err(Error::InvalidState(format!(
                    "canonical text {:?} does not match segments",
                    p.canonical_text
                )));
            }
            if p.contexts.len() != p.originals.len() || p.contexts.is_empty() {
                return Err(Error::InvalidState(format!(
                    "pattern {:?} has {} contexts and {} originals",
                    p.canonical_text,
                    p.contexts.len(),
                    p.originals.len()
                )));
            }
            for (c, raw) in p.contexts.into_iter().zip(p.originals) {
                let original = normalize(&raw);
                if c.interleave(&pattern)? != original.tokens {
                    return Err(Error::InvalidState(format!(
                        "context of {:?} does not reconstruct {raw:?}",
                        p.canonical_text
                    )));
                }
                store.upsert(pattern.clone(), c, original);
            }
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternExport {
    pub canonical_text: String,
    pub segments: Vec<Segment>,
    pub contexts: Vec<Context>,
    pub originals: Vec<String>,
}

/// Versioned export of a [`PatternStore`], sorted by canonical text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub version: u32,
    pub patterns: Vec<PatternExport>,
}

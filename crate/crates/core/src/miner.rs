//! Frequent n-gram mining by sentence support.
//!
//! Batch mining is levelwise: level 1 counts every distinct token, level
//! `n + 1` counts the windows whose length-`n` prefix and suffix are both
//! frequent (the sequential form of the Apriori join), and mining stops at the
//! first level without a frequent member.
//!
//! Incremental mining keeps two tables: the frequent set and its negative
//! border, the infrequent candidates that actually occur in the corpus. An
//! increment is scanned alone to update both tables; the retained corpus is
//! rescanned only for candidates that a promotion makes eligible for the
//! first time.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{Sentence, StopwordSet};

/// Format version of [`MinerSnapshot`].
pub const SNAPSHOT_VERSION: u32 = 1;

/// A contiguous token sequence of length at least one. Ordering is
/// lexicographic by token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NGram(Vec<String>);

impl NGram {
    /// Panics on an empty token list.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        assert!(!tokens.is_empty(), "n-gram must have at least one token");
        NGram(tokens)
    }

    /// Whitespace-separated tokens, e.g. `NGram::parse("try my best")`.
    pub fn parse(text: &str) -> Self {
        Self::new(text.split_whitespace())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self) -> &[String] {
        &self.0[..self.0.len() - 1]
    }

    pub fn suffix(&self) -> &[String] {
        &self.0[1..]
    }
}

impl Borrow<[String]> for NGram {
    fn borrow(&self) -> &[String] {
        &self.0
    }
}

impl From<&[String]> for NGram {
    fn from(w: &[String]) -> Self {
        NGram(w.to_vec())
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Inclusive support test: `count / total >= min_support`.
pub fn meets_support(count: u64, total: u64, min_support: f64) -> bool {
    total > 0 && count as f64 / total as f64 >= min_support
}

fn check_support(min_support: f64) -> Result<()> {
    if min_support.is_finite() && min_support > 0.0 && min_support <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSupport(min_support))
    }
}

/// Count, per window of length `len`, the sentences containing it at least
/// once. Only windows accepted by `keep` are counted.
fn count_windows<'a, F>(
    sentences: &[&'a Sentence],
    len: usize,
    keep: F,
    exec: Exec,
) -> HashMap<&'a [String], u64>
where
    F: Fn(&[String]) -> bool + Sync + Send,
{
    exec.fold(
        sentences,
        HashMap::new,
        |mut acc: HashMap<&'a [String], u64>, s: &&'a Sentence| {
            let s: &'a Sentence = s;
            let mut seen: Vec<&'a [String]> = s.tokens.windows(len).filter(|w| keep(w)).collect();
            seen.sort_unstable();
            seen.dedup();
            for w in seen {
                *acc.entry(w).or_insert(0) += 1;
            }
            acc
        },
        |mut a, b| {
            if a.len() < b.len() {
                return merge_counts(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        },
    )
}

fn merge_counts<'a>(
    mut a: HashMap<&'a [String], u64>,
    b: HashMap<&'a [String], u64>,
) -> HashMap<&'a [String], u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

fn is_join_candidate<K: Borrow<[String]> + Eq + std::hash::Hash>(
    w: &[String],
    frequent: &HashSet<K>,
) -> bool {
    w.len() == 1 || (frequent.contains(&w[..w.len() - 1]) && frequent.contains(&w[1..]))
}

/// Frequent set, negative border and retained corpus of one speaker.
#[derive(Debug, Clone)]
pub struct MinerState {
    min_support: f64,
    total: u64,
    frequent: HashMap<NGram, u64>,
    border: HashMap<NGram, u64>,
    corpus: Vec<Sentence>,
}

/// What an increment changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IncrementSummary {
    pub new_sentences: usize,
    /// N-grams frequent now but not before the increment.
    pub promoted: usize,
    /// N-grams frequent before but not after the increment.
    pub demoted: usize,
    /// Number of passes over the retained corpus.
    pub rescans: usize,
}

impl IncrementSummary {
    pub fn frequent_set_changed(&self) -> bool {
        self.promoted > 0 || self.demoted > 0
    }
}

pub fn mine_batch(corpus: Vec<Sentence>, min_support: f64) -> Result<MinerState> {
    MinerState::mine_batch(corpus, min_support, Exec::auto())
}

/// Functional form of [`MinerState::increment`].
pub fn mine_increment(mut state: MinerState, new_sentences: Vec<Sentence>) -> MinerState {
    state.increment(new_sentences, Exec::auto());
    state
}

impl MinerState {
    /// State over an empty corpus. Its first increment mines from scratch.
    pub fn empty(min_support: f64) -> Result<Self> {
        check_support(min_support)?;
        Ok(MinerState {
            min_support,
            total: 0,
            frequent: HashMap::new(),
            border: HashMap::new(),
            corpus: Vec::new(),
        })
    }

    /// Levelwise mining over `corpus`. Sentences without tokens are dropped.
    pub fn mine_batch(corpus: Vec<Sentence>, min_support: f64, exec: Exec) -> Result<Self> {
        check_support(min_support)?;
        let corpus: Vec<Sentence> = corpus.into_iter().filter(|s| !s.is_empty()).collect();
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let total = corpus.len() as u64;
        let mut frequent = HashMap::new();
        let mut border = HashMap::new();
        {
            let mut active: Vec<&Sentence> = corpus.iter().collect();
            let mut prev: HashSet<&[String]> = HashSet::new();
            let mut len = 1;
            loop {
                let counts = count_windows(&active, len, |w| is_join_candidate(w, &prev), exec);
                let mut cur = HashSet::new();
                for (w, c) in counts {
                    if meets_support(c, total, min_support) {
                        frequent.insert(NGram::from(w), c);
                        cur.insert(w);
                    } else {
                        border.insert(NGram::from(w), c);
                    }
                }
                if cur.is_empty() {
                    break;
                }
                // Only sentences holding a frequent n-gram can hold a candidate
                // one token longer.
                active.retain(|s| s.tokens.windows(len).any(|w| cur.contains(w)));
                prev = cur;
                len += 1;
            }
        }
        Ok(MinerState {
            min_support,
            total,
            frequent,
            border,
            corpus,
        })
    }

    /// Fold `new_sentences` into the state. Counts of tracked n-grams are
    /// updated from the increment alone; the result equals batch mining over
    /// the concatenated corpus.
    pub fn increment(&mut self, new_sentences: Vec<Sentence>, exec: Exec) -> IncrementSummary {
        let new_sentences: Vec<Sentence> =
            new_sentences.into_iter().filter(|s| !s.is_empty()).collect();
        if new_sentences.is_empty() {
            return IncrementSummary::default();
        }

        // Candidates relative to the old frequent set that occur in the
        // increment. Any such candidate missing from the tables had count zero.
        let old_frequent: HashSet<NGram> = self.frequent.keys().cloned().collect();
        let mut delta: HashMap<NGram, u64> = HashMap::new();
        {
            let refs: Vec<&Sentence> = new_sentences.iter().collect();
            let mut len = 1;
            loop {
                let counts =
                    count_windows(&refs, len, |w| is_join_candidate(w, &old_frequent), exec);
                for (w, c) in counts {
                    delta.insert(NGram::from(w), c);
                }
                let extends = refs
                    .iter()
                    .any(|s| s.tokens.windows(len).any(|w| old_frequent.contains(w)));
                if !extends {
                    break;
                }
                len += 1;
            }
        }

        let mut by_len: BTreeMap<usize, HashMap<NGram, u64>> = BTreeMap::new();
        for (g, c) in self.frequent.drain().chain(self.border.drain()) {
            by_len.entry(g.len()).or_default().insert(g, c);
        }
        for (g, c) in delta {
            *by_len.entry(g.len()).or_default().entry(g).or_insert(0) += c;
        }
        self.total += new_sentences.len() as u64;
        let summary_new = new_sentences.len();
        self.corpus.extend(new_sentences);

        let mut rescans = 0;
        let mut frequent = HashMap::new();
        let mut border = HashMap::new();
        let mut cur: HashSet<NGram> = HashSet::new();
        let mut candidates = by_len.remove(&1).unwrap_or_default();
        let mut len = 1;
        loop {
            for (g, c) in candidates {
                if meets_support(c, self.total, self.min_support) {
                    cur.insert(g.clone());
                    frequent.insert(g, c);
                } else {
                    border.insert(g, c);
                }
            }
            if cur.is_empty() {
                break;
            }
            let next = len + 1;
            candidates = by_len
                .remove(&next)
                .unwrap_or_default()
                .into_iter()
                .filter(|(g, _)| cur.contains(g.prefix()) && cur.contains(g.suffix()))
                .collect();
            // Joins involving a newly frequent n-gram were never candidates,
            // so their counts come from the retained corpus.
            if cur.iter().any(|g| !old_frequent.contains(g)) {
                rescans += 1;
                let all: Vec<&Sentence> = self.corpus.iter().collect();
                let counts = count_windows(
                    &all,
                    next,
                    |w| {
                        let (p, s) = (&w[..w.len() - 1], &w[1..]);
                        cur.contains(p)
                            && cur.contains(s)
                            && !(old_frequent.contains(p) && old_frequent.contains(s))
                    },
                    exec,
                );
                for (w, c) in counts {
                    let prior = candidates.insert(NGram::from(w), c);
                    debug_assert!(prior.is_none());
                }
            }
            cur.clear();
            len = next;
        }

        let promoted = frequent.keys().filter(|g| !old_frequent.contains(*g)).count();
        let demoted = old_frequent.iter().filter(|g| !frequent.contains_key(*g)).count();
        self.frequent = frequent;
        self.border = border;
        IncrementSummary {
            new_sentences: summary_new,
            promoted,
            demoted,
            rescans,
        }
    }

    pub fn min_support(&self) -> f64 {
        self.min_support
    }

    pub fn total_sentences(&self) -> u64 {
        self.total
    }

    pub fn frequent(&self) -> &HashMap<NGram, u64> {
        &self.frequent
    }

    pub fn border(&self) -> &HashMap<NGram, u64> {
        &self.border
    }

    pub fn corpus(&self) -> &[Sentence] {
        &self.corpus
    }

    pub fn count(&self, g: &[String]) -> Option<u64> {
        self.frequent.get(g).or_else(|| self.border.get(g)).copied()
    }

    pub fn is_frequent(&self, g: &[String]) -> bool {
        self.frequent.contains_key(g)
    }

    /// Frequent n-grams of length two or more that are not stopword-only.
    pub fn style_ngrams(&self, stops: &StopwordSet) -> BTreeSet<NGram> {
        self.frequent
            .keys()
            .filter(|g| g.len() >= 2 && !stops.is_stopword_only(g.tokens()))
            .cloned()
            .collect()
    }

    /// Frequent n-grams sorted by support descending, then lexicographically.
    pub fn frequent_by_support(&self) -> Vec<(&NGram, u64)> {
        let mut v: Vec<_> = self.frequent.iter().map(|(g, c)| (g, *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Check every structural invariant of the two tables.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (g, &c) in &self.frequent {
            if !meets_support(c, self.total, self.min_support) {
                return Err(format!("frequent {g} below support ({c}/{})", self.total));
            }
            for n in 1..g.len() {
                for w in g.tokens().windows(n) {
                    let Some(&sc) = self.frequent.get(w) else {
                        return Err(format!("frequent {g} has infrequent subsequence {}", w.join(" ")));
                    };
                    if sc < c {
                        return Err(format!("support not antitone at {g}"));
                    }
                }
            }
        }
        for (g, &c) in &self.border {
            if self.frequent.contains_key(g) {
                return Err(format!("{g} is both frequent and border"));
            }
            if meets_support(c, self.total, self.min_support) {
                return Err(format!("border {g} meets support"));
            }
            if c == 0 || c > self.total {
                return Err(format!("border {g} has count {c}"));
            }
            if g.len() > 1 {
                for s in [g.prefix(), g.suffix()] {
                    match self.frequent.get(s) {
                        Some(&sc) if sc >= c => {}
                        _ => return Err(format!("border {g} has non-frequent subsequence")),
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializable form with arrays sorted by tokens.
    pub fn snapshot(&self, corpus_log_path: Option<String>) -> MinerSnapshot {
        fn sorted(m: &HashMap<NGram, u64>) -> Vec<SupportRecord> {
            let mut v: Vec<SupportRecord> = m
                .iter()
                .map(|(g, &count)| SupportRecord {
                    tokens: g.0.clone(),
                    count,
                })
                .collect();
            v.sort_by(|a, b| a.tokens.cmp(&b.tokens));
            v
        }
        MinerSnapshot {
            version: SNAPSHOT_VERSION,
            min_support: self.min_support,
            total_sentences: self.total,
            frequent: sorted(&self.frequent),
            border: sorted(&self.border),
            corpus_log_path,
        }
    }

    /// Rebuild from a snapshot and the retained corpus it was taken over.
    pub fn from_snapshot(snap: MinerSnapshot, corpus: Vec<Sentence>) -> Result<Self> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch {
                found: snap.version,
                expected: SNAPSHOT_VERSION,
            });
        }
        check_support(snap.min_support).map_err(|e| Error::InvalidState(e.to_string()))?;
        if snap.total_sentences != corpus.len() as u64 {
            return Err(Error::InvalidState(format!(
                "state counts {} sentences but corpus log holds {}",
                snap.total_sentences,
                corpus.len()
            )));
        }
        let table = |recs: Vec<SupportRecord>| -> Result<HashMap<NGram, u64>> {
            recs.into_iter()
                .map(|r| {
                    if r.tokens.is_empty() {
                        Err(Error::InvalidState("empty n-gram".into()))
                    } else {
                        Ok((NGram(r.tokens), r.count))
                    }
                })
                .collect()
        };
        let state = MinerState {
            min_support: snap.min_support,
            total: snap.total_sentences,
            frequent: table(snap.frequent)?,
            border: table(snap.border)?,
            corpus,
        };
        state.validate().map_err(Error::InvalidState)?;
        Ok(state)
    }

    /// Same tables and counts (corpus contents are not compared).
    pub fn same_tables(&self, other: &MinerState) -> bool {
        self.total == other.total
            && self.min_support == other.min_support
            && self.frequent == other.frequent
            && self.border == other.border
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub tokens: Vec<String>,
    pub count: u64,
}

/// Versioned export of a [`MinerState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerSnapshot {
    pub version: u32,
    pub min_support: f64,
    pub total_sentences: u64,
    pub frequent: Vec<SupportRecord>,
    pub border: Vec<SupportRecord>,
    pub corpus_log_path: Option<String>,
}

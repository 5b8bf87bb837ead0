//! Pattern selection and insertion.
//!
//! For an input sentence the pattern whose mean context vector is closest to
//! the input vector is selected. The input is split into chunks, every
//! order-preserving distribution of the chunks over the pattern's wildcard
//! slots (slots may stay empty) is a candidate, and the candidate closest to
//! the pattern's mean original-sentence vector is the output.

use std::cmp::Ordering;
use std::io::Write;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedder};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{normalize, Sentence, StopwordSet};
use crate::patterns::{Pattern, PatternRecord, PatternStore};

pub const DEFAULT_CANDIDATE_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkMode {
    /// Every token is its own chunk.
    Token,
    /// Determiner/adjective runs attach to the following noun-like token.
    #[default]
    Phrase,
}

impl FromStr for ChunkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(ChunkMode::Token),
            "phrase" => Ok(ChunkMode::Phrase),
            other => Err(Error::InvalidParameter(format!(
                "chunk mode {other:?} (expected token or phrase)"
            ))),
        }
    }
}

impl std::fmt::Display for ChunkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChunkMode::Token => "token",
            ChunkMode::Phrase => "phrase",
        })
    }
}

/// Ordered, non-empty token runs that concatenate to the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chunking(Vec<Vec<String>>);

impl Chunking {
    pub fn chunks(&self) -> &[Vec<String>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> Vec<String> {
        self.0.concat()
    }

    /// Merge every `size` consecutive chunks into one.
    pub fn coarsen(&self, size: usize) -> Chunking {
        Chunking(self.0.chunks(size.max(1)).map(|g| g.concat()).collect())
    }
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "any", "every", "each", "no", "another", "either", "neither", "such", "what",
    "which", "whose", "all", "both", "few", "many", "much", "several", "more", "most", "one", "two",
    "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred", "thousand",
    "million", "millions", "billion", "billions",
];

const ADJECTIVES: &[&str] = &[
    "good", "great", "big", "best", "better", "new", "old", "little", "small", "large", "high",
    "low", "long", "short", "young", "bad", "worse", "worst", "true", "real", "huge", "tremendous",
    "beautiful", "terrible", "incredible", "amazing", "strong", "weak", "rich", "poor", "happy",
    "sad", "easy", "hard", "fast", "slow", "hot", "cold", "full", "free", "open", "clear", "safe",
    "smart", "tough", "fair", "special", "whole", "entire", "major", "total", "instant", "nice",
    "fine", "top", "last", "first", "next", "other", "same", "different", "important", "local",
    "national", "global", "public", "private", "military", "economic", "political", "social",
    "american", "foreign", "illegal", "legal", "unbelievable", "fantastic", "wonderful",
    "horrible", "disgusting", "stupid", "crooked", "fake", "dishonest", "rigged",
    "single", "double", "early", "late", "hungry", "angry", "simple", "quick", "deep", "wide",
    "dark", "bright", "quiet", "loud", "warm", "cheap", "expensive", "fresh", "modern", "ancient",
];

/// Word-shape adjectives beyond the list: `-ous -ful -ive -able -ible -less
/// -ical -ish`, at least six characters.
const ADJECTIVE_SUFFIXES: &[&str] = &["ous", "ful", "ive", "able", "ible", "less", "ical", "ish"];

fn is_modifier(t: &str) -> bool {
    DETERMINERS.contains(&t)
        || ADJECTIVES.contains(&t)
        || t.chars().all(|c| c.is_ascii_digit())
        || (t.len() >= 6 && ADJECTIVE_SUFFIXES.iter().any(|s| t.ends_with(s)))
}

fn function_words() -> &'static StopwordSet {
    static SET: std::sync::OnceLock<StopwordSet> = std::sync::OnceLock::new();
    SET.get_or_init(StopwordSet::default)
}

fn is_noun_like(t: &str) -> bool {
    !is_modifier(t) && !function_words().contains(t)
}

/// Split `tokens` into chunks under `mode`.
pub fn chunk(tokens: &[String], mode: ChunkMode) -> Chunking {
    match mode {
        ChunkMode::Token => Chunking(tokens.iter().map(|t| vec![t.clone()]).collect()),
        ChunkMode::Phrase => {
            let mut out = Vec::new();
            let mut i = 0;
            while i < tokens.len() {
                if is_modifier(&tokens[i]) {
                    let mut j = i;
                    while j < tokens.len() && is_modifier(&tokens[j]) {
                        j += 1;
                    }
                    if j < tokens.len() && is_noun_like(&tokens[j]) {
                        out.push(tokens[i..=j].to_vec());
                        i = j + 1;
                    } else {
                        out.extend(tokens[i..j].iter().map(|t| vec![t.clone()]));
                        i = j;
                    }
                } else {
                    out.push(vec![tokens[i].clone()]);
                    i += 1;
                }
            }
            Chunking(out)
        }
    }
}

/// `C(m + k - 1, k - 1)`: ways to distribute `m` ordered chunks over `k`
/// ordered slots, slots possibly empty. Saturates at `u128::MAX`.
pub fn distribution_count(m: usize, k: usize) -> u128 {
    if k == 0 {
        return u128::from(m == 0);
    }
    let (n, r) = ((m + k - 1) as u128, (k - 1).min(m) as u128);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Every distribution of `m` chunks over `k` slots as per-slot counts, in
/// lexicographic order of the count vectors.
pub fn distributions(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for take in 0..=left {
            cur.push(take);
            rec(left - take, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(m, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Fill the wildcards of `pattern` with every distribution of `chunks`.
/// Token-identical candidates are kept once, at their first position.
pub fn generate_candidates(chunks: &Chunking, pattern: &Pattern) -> Vec<Vec<String>> {
    let k = pattern.wildcard_count();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for counts in distributions(chunks.len(), k) {
        let mut start = 0;
        let slots: Vec<Vec<String>> = counts
            .iter()
            .map(|&c| {
                let fill = chunks.0[start..start + c].concat();
                start += c;
                fill
            })
            .collect();
        let cand = pattern.fill(slots.iter().map(Vec::as_slice));
        if seen.insert(cand.clone()) {
            out.push(cand);
        }
    }
    out
}

/// Chunk under `mode`, coarsening until at most `cap` candidates remain:
/// token mode first falls back to phrase mode, then consecutive chunks are
/// grouped in twos, threes and so on.
pub fn chunk_within_cap(tokens: &[String], mode: ChunkMode, slots: usize, cap: usize) -> (Chunking, ChunkMode) {
    let cap = cap.max(1) as u128;
    let mut chunks = chunk(tokens, mode);
    let mut used = mode;
    if distribution_count(chunks.len(), slots) > cap && mode == ChunkMode::Token {
        chunks = chunk(tokens, ChunkMode::Phrase);
        used = ChunkMode::Phrase;
    }
    let base = chunks.clone();
    let mut size = 2;
    while distribution_count(chunks.len(), slots) > cap && chunks.len() > 1 {
        chunks = base.coarsen(size);
        size += 1;
    }
    (chunks, used)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub score: f64,
}

/// Score each candidate against the pattern's mean original vector and pick
/// the best; ties go to the lexicographically smallest token list.
pub fn rank_and_pick(
    candidates: Vec<Vec<String>>,
    record: &PatternRecord,
    embedder: &dyn Embedder,
    exec: Exec,
) -> Result<(Vec<String>, Vec<Candidate>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidates to rank".into()));
    }
    let means = record.means(embedder)?;
    if means.original.is_zero() {
        return Err(Error::DegeneratePattern(format!(
            "{} has a zero mean original vector",
            record.pattern()
        )));
    }
    let scores = exec.map(&candidates, |c| {
        embedder.embed(c).and_then(|v| cosine(&v, &means.original))
    });
    let scored: Vec<Candidate> = candidates
        .into_iter()
        .zip(scores)
        .map(|(tokens, score)| Ok(Candidate { tokens, score: score? }))
        .collect::<Result<_>>()?;
    let best = scored
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| b.tokens.cmp(&a.tokens))
        })
        .expect("non-empty")
        .tokens
        .clone();
    Ok((best, scored))
}

/// Pick the insertable pattern whose mean context vector is most similar to
/// the input. Ties go to more contexts, then the smaller canonical text.
pub fn select_pattern<'s>(
    input: &Sentence,
    store: &'s PatternStore,
    embedder: &dyn Embedder,
    exec: Exec,
) -> Result<(&'s PatternRecord, f64)> {
    if input.is_empty() {
        return Err(Error::EmptyInput);
    }
    let input_vec = embedder.embed(&input.tokens)?;
    let eligible: Vec<&PatternRecord> = store.records().filter(|r| r.is_insertable()).collect();
    let scores = exec.map(&eligible, |r| -> Result<Option<f64>> {
        let m = r.means(embedder)?;
        if m.original.is_zero() || m.context.is_zero() {
            return Ok(None);
        }
        cosine(&input_vec, &m.context).map(Some)
    });
    let mut best: Option<(&PatternRecord, f64)> = None;
    for (r, score) in eligible.into_iter().zip(scores) {
        let Some(score) = score? else { continue };
        let better = match best {
            None => true,
            Some((b, bs)) => match score.total_cmp(&bs) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => match r.contexts().len().cmp(&b.contexts().len()) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => r.pattern().canonical_text() < b.pattern().canonical_text(),
                },
            },
        };
        if better {
            best = Some((r, score));
        }
    }
    best.ok_or(Error::NoPatterns)
}

/// External grammar-correction command. The sentence goes to the command's
/// standard input and the corrected sentence is read from its standard
/// output. A failing command disables the hook for the rest of the session.
#[derive(Debug)]
pub struct GecHook {
    command: String,
    disabled: AtomicBool,
}

impl GecHook {
    pub fn new(command: impl Into<String>) -> Self {
        GecHook {
            command: command.into(),
            disabled: AtomicBool::new(false),
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.disabled.load(AtomicOrdering::Relaxed)
    }

    /// Corrected text, or `None` when the hook is (or becomes) disabled.
    pub fn apply(&self, sentence: &str) -> Option<String> {
        if self.is_disabled() {
            return None;
        }
        match self.run(sentence) {
            Ok(out) => Some(out),
            Err(why) => {
                log::warn!("grammar correction hook disabled: {why}");
                self.disabled.store(true, AtomicOrdering::Relaxed);
                None
            }
        }
    }

    fn run(&self, sentence: &str) -> std::result::Result<String, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| e.to_string())?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let _ = writeln!(stdin, "{sentence}");
        }
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("`{}` exited with {}", self.command, out.status));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }
}

#[derive(Debug, Clone)]
pub struct TransformConfig {
    pub chunk_mode: ChunkMode,
    pub candidate_cap: usize,
    pub gec: Option<Arc<GecHook>>,
    pub exec: Exec,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            chunk_mode: ChunkMode::Phrase,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            gec: None,
            exec: Exec::auto(),
        }
    }
}

/// Every intermediate step of one transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformResult {
    pub input: Sentence,
    pub selected_pattern: String,
    pub selection_score: f64,
    pub chunk_mode: ChunkMode,
    pub chunks: Chunking,
    pub candidates: Vec<Candidate>,
    /// Best candidate before grammar correction.
    pub pattern_output: String,
    /// Final sentence (after grammar correction when the hook ran).
    pub output: Sentence,
    pub corrected: bool,
}

pub fn transform(
    raw: &str,
    store: &PatternStore,
    embedder: &dyn Embedder,
    config: &TransformConfig,
) -> Result<TransformResult> {
    let input = normalize(raw);
    if input.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (record, selection_score) = select_pattern(&input, store, embedder, config.exec)?;
    let pattern = record.pattern();
    let (chunks, chunk_mode) = chunk_within_cap(
        &input.tokens,
        config.chunk_mode,
        pattern.wildcard_count(),
        config.candidate_cap,
    );
    let candidates = generate_candidates(&chunks, pattern);
    let (best, candidates) = rank_and_pick(candidates, record, embedder, config.exec)?;
    let pattern_output = best.join(" ");
    let corrected = config.gec.as_ref().and_then(|h| h.apply(&pattern_output));
    let output = match &corrected {
        Some(text) => normalize(text),
        None => Sentence::from_tokens(best),
    };
    Ok(TransformResult {
        input,
        selected_pattern: pattern.canonical_text(),
        selection_score,
        chunk_mode,
        chunks,
        candidates,
        pattern_output,
        output,
        corrected: corrected.is_some(),
    })
}

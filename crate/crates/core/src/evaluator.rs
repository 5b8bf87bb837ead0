//! Transformation quality metrics.
//!
//! Fluency in the speaker's style is measured as perplexity under an
//! interpolated add-k n-gram language model trained on the speaker corpus;
//! context preservation as the cosine between the built-in weighted-average
//! embeddings of input and output.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, BuiltinEmbedder, Embedder};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{Sentence, StopwordSet};
use crate::miner::MinerState;
use crate::patterns::PatternStore;
use crate::session::atomic_write;
use crate::transformer::{transform, TransformConfig};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub order: usize,
    /// Add-k constant, strictly positive.
    pub k: f64,
    /// Training words seen fewer times than this become UNK.
    pub min_count: u64,
    /// Interpolation weights, unigram first. `None` means `j / sum(1..=order)`
    /// for the order-`j` estimate.
    pub weights: Option<Vec<f64>>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            k: 0.1,
            min_count: 2,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<String, u64>,
}

/// Interpolated add-k n-gram model with sentence-boundary padding.
///
/// The predicted vocabulary is the known words plus `</s>` and `<unk>`; each
/// order-`j` estimate is `(c(h, w) + k) / (c(h) + k V)` and the estimates are
/// mixed with fixed weights, so every conditional distribution sums to one.
#[derive(Debug, Clone)]
pub struct NGramLM {
    order: usize,
    k: f64,
    weights: Vec<f64>,
    known: HashSet<String>,
    /// `tables[j]` maps contexts of length `j` to successor counts.
    tables: Vec<HashMap<Vec<String>, ContextCounts>>,
}

impl NGramLM {
    pub fn train(corpus: &[Sentence], config: &LmConfig) -> Result<Self> {
        if config.order < 2 {
            return Err(Error::InvalidParameter(format!("LM order {} < 2", config.order)));
        }
        if !(config.k.is_finite() && config.k > 0.0) {
            return Err(Error::InvalidParameter(format!("smoothing k = {}", config.k)));
        }
        let weights = match &config.weights {
            None => {
                let sum = (config.order * (config.order + 1) / 2) as f64;
                (1..=config.order).map(|j| j as f64 / sum).collect()
            }
            Some(w) => {
                if w.len() != config.order
                    || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                    || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(Error::InvalidParameter(
                        "interpolation weights must be non-negative, one per order, summing to 1".into(),
                    ));
                }
                w.clone()
            }
        };
        let corpus: Vec<&Sentence> = corpus.iter().filter(|s| !s.is_empty()).collect();
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut word_counts: HashMap<&str, u64> = HashMap::new();
        for s in &corpus {
            for t in &s.tokens {
                *word_counts.entry(t).or_insert(0) += 1;
            }
        }
        let known: HashSet<String> = word_counts
            .into_iter()
            .filter(|&(_, c)| c >= config.min_count)
            .map(|(w, _)| w.to_string())
            .collect();
        let mut lm = NGramLM {
            order: config.order,
            k: config.k,
            weights,
            known,
            tables: vec![HashMap::new(); config.order],
        };
        for s in corpus {
            let seq = lm.padded(&s.tokens);
            for i in lm.order - 1..seq.len() {
                for j in 0..lm.order {
                    let ctx = seq[i - j..i].to_vec();
                    let e = lm.tables[j].entry(ctx).or_default();
                    e.total += 1;
                    *e.next.entry(seq[i].clone()).or_insert(0) += 1;
                }
            }
        }
        Ok(lm)
    }

    fn map_word(&self, w: &str) -> String {
        if self.known.contains(w) || w == EOS || w == BOS {
            w.to_string()
        } else {
            UNK.to_string()
        }
    }

    fn padded(&self, tokens: &[String]) -> Vec<String> {
        let mut seq = vec![BOS.to_string(); self.order - 1];
        seq.extend(tokens.iter().map(|t| self.map_word(t)));
        seq.push(EOS.to_string());
        seq
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the predicted vocabulary: known words, `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.known.len() + 2
    }

    /// The predicted vocabulary in sorted order.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.known.iter().cloned().collect();
        v.push(EOS.into());
        v.push(UNK.into());
        v.sort();
        v
    }

    /// Add-k estimate of order `context.len() + 1`, without interpolation.
    pub fn order_prob(&self, context: &[String], word: &str) -> f64 {
        let w = self.map_word(word);
        let ctx: Vec<String> = context.iter().map(|t| self.map_word(t)).collect();
        let v = self.vocab_size() as f64;
        let (c, total) = match self.tables[ctx.len()].get(&ctx) {
            Some(e) => (e.next.get(&w).copied().unwrap_or(0), e.total),
            None => (0, 0),
        };
        (c as f64 + self.k) / (total as f64 + self.k * v)
    }

    /// Interpolated `P(word | history)`; only the last `order - 1` history
    /// tokens are used, and a short history is padded with `<s>`.
    pub fn prob(&self, history: &[String], word: &str) -> f64 {
        let mut h: Vec<String> = vec![BOS.to_string(); (self.order - 1).saturating_sub(history.len())];
        let keep = history.len().saturating_sub(self.order - 1);
        h.extend(history[keep..].iter().cloned());
        (0..self.order)
            .map(|j| self.weights[j] * self.order_prob(&h[h.len() - j..], word))
            .sum()
    }

    /// Contexts of length `len` seen in training, sorted.
    pub fn observed_contexts(&self, len: usize) -> Vec<Vec<String>> {
        let mut v: Vec<_> = self.tables.get(len).map(|t| t.keys().cloned().collect()).unwrap_or_default();
        v.sort();
        v
    }

    /// `exp` of the negative mean log probability over the sentence tokens
    /// and the end marker.
    pub fn perplexity(&self, sentence: &Sentence) -> Result<f64> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        let seq = self.padded(&sentence.tokens);
        let start = self.order - 1;
        let log_sum: f64 = (start..seq.len())
            .map(|i| self.prob(&seq[i - start..i], &seq[i]).ln())
            .sum();
        Ok((-log_sum / (seq.len() - start) as f64).exp())
    }
}

pub fn context_similarity(input: &Sentence, output: &Sentence, embedder: &dyn Embedder) -> Result<f64> {
    cosine(&embedder.embed(&input.tokens)?, &embedder.embed(&output.tokens)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub input: String,
    pub output: String,
    pub perplexity: f64,
    pub similarity: f64,
}

/// Lower median perplexity is better; higher mean similarity is better.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub median_perplexity: f64,
    pub mean_similarity: f64,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub median_perplexity: f64,
    pub mean_similarity: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            median_perplexity: self.median_perplexity,
            mean_similarity: self.mean_similarity,
            n: self.rows.len(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidState(format!("csv flush: {e}")))
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        atomic_write(&csv_path, &self.to_csv()?)?;
        let mut json = serde_json::to_vec_pretty(&self.summary())?;
        json.push(b'\n');
        atomic_write(&json_path, &json)?;
        Ok((csv_path, json_path))
    }
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn evaluate(
    inputs: &[Sentence],
    outputs: &[Sentence],
    lm: &NGramLM,
    embedder: &dyn Embedder,
    exec: Exec,
) -> Result<EvalReport> {
    if inputs.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            inputs: inputs.len(),
            outputs: outputs.len(),
        });
    }
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("nothing to evaluate".into()));
    }
    let pairs: Vec<(&Sentence, &Sentence)> = inputs.iter().zip(outputs).collect();
    let rows = exec
        .map(&pairs, |(i, o)| -> Result<EvalRow> {
            Ok(EvalRow {
                input: i.text(),
                output: o.text(),
                perplexity: lm.perplexity(o)?,
                similarity: context_similarity(i, o, embedder)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ppl: Vec<f64> = rows.iter().map(|r| r.perplexity).collect();
    let mean_similarity = rows.iter().map(|r| r.similarity).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport {
        median_perplexity: median(&ppl).expect("non-empty"),
        mean_similarity,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct SweepParams {
    pub min_support: f64,
    pub stopwords: StopwordSet,
    pub seed: u64,
    pub transform: TransformConfig,
    pub lm: LmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub fraction: f64,
    pub prefix_sentences: usize,
    pub patterns: usize,
    /// Inputs left unchanged because the prefix yielded no usable pattern.
    pub untransformed: usize,
    pub median_perplexity: f64,
    pub mean_similarity: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub reports: Vec<EvalReport>,
}

impl SweepResult {
    /// `sweep-<fraction>.csv` per fraction plus `sweep.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (e, r) in self.entries.iter().zip(&self.reports) {
            let path = dir.join(format!("sweep-{}.csv", e.fraction));
            atomic_write(&path, &r.to_csv()?)?;
            written.push(path);
        }
        let path = dir.join("sweep.json");
        let mut json = serde_json::to_vec_pretty(&self.entries)?;
        json.push(b'\n');
        atomic_write(&path, &json)?;
        written.push(path);
        Ok(written)
    }
}

/// Number of leading sentences used for `fraction` of an `n`-sentence corpus.
pub fn prefix_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).ceil() as usize).clamp(1, n)
}

/// Re-mine corpus prefixes and transform `inputs` with each. The language
/// model and the similarity embedder are trained once on the full corpus.
pub fn fraction_sweep(
    corpus: &[Sentence],
    inputs: &[Sentence],
    fractions: &[f64],
    params: &SweepParams,
) -> Result<SweepResult> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidParameter(format!("fraction {f} outside (0, 1]")));
    }
    let lm = NGramLM::train(corpus, &params.lm)?;
    let judge = BuiltinEmbedder::from_corpus(params.seed, corpus);
    let exec = params.transform.exec;
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    for &fraction in fractions {
        let prefix = &corpus[..prefix_len(corpus.len(), fraction)];
        let state = MinerState::mine_batch(prefix.to_vec(), params.min_support, exec)?;
        let store = PatternStore::rebuild(prefix, &state.style_ngrams(&params.stopwords), exec);
        let embedder = BuiltinEmbedder::from_corpus(params.seed, prefix);
        let mut untransformed = 0;
        let mut outputs = Vec::with_capacity(inputs.len());
        for input in inputs {
            match transform(&input.raw, &store, &embedder, &params.transform) {
                Ok(r) => outputs.push(r.output),
                Err(Error::NoPatterns) => {
                    untransformed += 1;
                    outputs.push(input.clone());
                }
                Err(e) => return Err(e),
            }
        }
        let report = evaluate(inputs, &outputs, &lm, &judge, exec)?;
        let s = report.summary();
        entries.push(SweepEntry {
            fraction,
            prefix_sentences: prefix.len(),
            patterns: store.len(),
            untransformed,
            median_perplexity: s.median_perplexity,
            mean_similarity: s.mean_similarity,
            n: s.n,
        });
        reports.push(report);
    }
    Ok(SweepResult { entries, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::normalize;
    use crate::synth::{SpeakerCorpus, SynthConfig};
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sents(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| normalize(l)).collect()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn hand_computed_bigram_estimate() {
        let cfg = LmConfig {
            order: 2,
            k: 0.1,
            min_count: 1,
            weights: None,
        };
        let lm = NGramLM::train(&sents(&["a b", "a c"]), &cfg).unwrap();
        // V = {a, b, c, </s>, <unk>} = 5; c(a, b) = 1, c(a) = 2.
        assert_eq!(lm.vocab_size(), 5);
        assert_abs_diff_eq!(lm.order_prob(&toks("a"), "b"), 1.1 / 2.5, epsilon = 1e-15);
        // Unigram: c(b) = 1 of 6 predicted tokens (a a b c </s> </s>).
        assert_abs_diff_eq!(lm.order_prob(&[], "b"), 1.1 / 6.5, epsilon = 1e-15);
        let p = lm.prob(&toks("a"), "b");
        assert_abs_diff_eq!(p, (1.0 / 3.0) * (1.1 / 6.5) + (2.0 / 3.0) * (1.1 / 2.5), epsilon = 1e-15);
    }

    #[test]
    fn singletons_become_unk() {
        let lm = NGramLM::train(&sents(&["a b", "a c"]), &LmConfig { order: 2, ..LmConfig::default() }).unwrap();
        // Only "a" survives; b and c share the UNK slot.
        assert_eq!(lm.vocab_size(), 3);
        assert_abs_diff_eq!(lm.order_prob(&toks("a"), "b"), (2.0 + 0.1) / (2.0 + 0.3), epsilon = 1e-15);
        assert_eq!(lm.order_prob(&toks("a"), "b"), lm.order_prob(&toks("a"), "zzz"));
    }

    #[test]
    fn distributions_are_normalized() {
        let corpus = SpeakerCorpus::generate(&SynthConfig::default(), 3).sentences;
        let lm = NGramLM::train(&corpus, &LmConfig::default()).unwrap();
        let vocab = lm.vocabulary();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in 0..lm.order() {
            let contexts = lm.observed_contexts(len);
            for ctx in contexts.choose_multiple(&mut rng, 30) {
                let total: f64 = vocab.iter().map(|w| lm.prob(ctx, w)).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
                assert!(vocab.iter().all(|w| {
                    let p = lm.prob(ctx, w);
                    p > 0.0 && p <= 1.0
                }));
            }
        }
    }

    #[test]
    fn degenerate_corpus_perplexity_goes_to_one() {
        let corpus = sents(&["we will win"; 10]);
        let s = normalize("we will win");
        let ppl = |k: f64, weights: Option<Vec<f64>>| {
            let lm = NGramLM::train(&corpus, &LmConfig { k, weights, ..LmConfig::default() }).unwrap();
            lm.perplexity(&s).unwrap()
        };
        let top_only = Some(vec![0.0, 0.0, 1.0]);
        assert!(ppl(1e-9, top_only.clone()) < 1.0 + 1e-6);
        assert!(ppl(1e-9, top_only.clone()) < ppl(0.1, top_only.clone()));
        // Fixed interpolation keeps the unigram share: limit is
        // 1 / (1/6 * 1/4 + 5/6) per token.
        let limit = 1.0 / (1.0 / 24.0 + 5.0 / 6.0);
        assert_abs_diff_eq!(ppl(1e-12, None), limit, epsilon = 1e-6);
        assert!(ppl(0.1, None) > ppl(0.001, None));
    }

    #[test]
    fn near_uniform_model() {
        let lm = NGramLM::train(&sents(&["a b c d", "d c b a"]), &LmConfig { k: 1e9, ..LmConfig::default() }).unwrap();
        let v = lm.vocab_size() as f64;
        assert_eq!(v, 6.0);
        assert_abs_diff_eq!(lm.perplexity(&normalize("a b zzz")).unwrap(), v, epsilon = 1e-6);
    }

    #[test]
    fn verbatim_beats_shuffled() {
        let cfg = SynthConfig {
            sentences: 1000,
            ..SynthConfig::default()
        };
        let corpus = SpeakerCorpus::generate(&cfg, 21).sentences;
        let lm = NGramLM::train(&corpus, &LmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sample: Vec<&Sentence> = corpus.choose_multiple(&mut rng, 200).collect();
        let mut wins = 0;
        for s in &sample {
            let mut shuffled = s.tokens.clone();
            shuffled.shuffle(&mut rng);
            let a = lm.perplexity(s).unwrap();
            let b = lm.perplexity(&Sentence::from_tokens(shuffled)).unwrap();
            if a <= b {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * sample.len() as f64, "{wins}");
    }

    #[test]
    fn perplexity_errors_and_determinism() {
        let lm = NGramLM::train(&sents(&["a b", "a b"]), &LmConfig::default()).unwrap();
        assert!(matches!(lm.perplexity(&normalize("")), Err(Error::EmptySentence)));
        let s = normalize("a b c");
        assert_eq!(lm.perplexity(&s).unwrap(), lm.perplexity(&s).unwrap());
        assert!(NGramLM::train(&[], &LmConfig::default()).is_err());
        assert!(NGramLM::train(&sents(&["a"]), &LmConfig { order: 1, ..LmConfig::default() }).is_err());
        assert!(NGramLM::train(&sents(&["a"]), &LmConfig { k: 0.0, ..LmConfig::default() }).is_err());
    }

    #[test]
    fn similarity_cases() {
        let corpus = SpeakerCorpus::generate(&SynthConfig::default(), 8);
        let e = BuiltinEmbedder::from_corpus(3, &corpus.sentences);
        let s = normalize("w1 w2 w3");
        assert_abs_diff_eq!(context_similarity(&s, &s, &e).unwrap(), 1.0, epsilon = 1e-12);
        // Disjoint random vocabularies: near zero on average.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0.0;
        for _ in 0..100 {
            let pick = |rng: &mut ChaCha8Rng, base: usize| {
                Sentence::from_tokens((0..6).map(|_| format!("x{}", base + rand::Rng::gen_range(rng, 0..500))).collect())
            };
            let a = pick(&mut rng, 0);
            let b = pick(&mut rng, 1000);
            let c = context_similarity(&a, &b, &e).unwrap();
            assert!(c.abs() < 0.3, "{c}");
            total += c;
        }
        assert!((total / 100.0).abs() < 0.05);
    }

    #[test]
    fn evaluate_cases() {
        let corpus = sents(&["a b c", "a b d", "b c d"]);
        let lm = NGramLM::train(&corpus, &LmConfig::default()).unwrap();
        let e = BuiltinEmbedder::from_corpus(1, &corpus);
        let one = evaluate(&corpus[..1], &corpus[1..2], &lm, &e, Exec::auto()).unwrap();
        assert_eq!(one.median_perplexity, lm.perplexity(&corpus[1]).unwrap());
        assert_eq!(one.mean_similarity, context_similarity(&corpus[0], &corpus[1], &e).unwrap());
        let same = evaluate(&corpus, &corpus, &lm, &e, Exec::auto()).unwrap();
        assert_abs_diff_eq!(same.mean_similarity, 1.0, epsilon = 1e-12);
        assert!(matches!(
            evaluate(&corpus, &corpus[..1], &lm, &e, Exec::auto()),
            Err(Error::LengthMismatch { inputs: 3, outputs: 1 })
        ));
        let seq = evaluate(&corpus, &corpus, &lm, &e, Exec::Sequential).unwrap();
        assert_eq!(seq, same);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn csv_layout() {
        let report = EvalReport {
            median_perplexity: 2.0,
            mean_similarity: 0.5,
            rows: vec![EvalRow {
                input: "a b".into(),
                output: "a, b".into(),
                perplexity: 2.0,
                similarity: 0.5,
            }],
        };
        let csv = String::from_utf8(report.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "input,output,perplexity,similarity\na b,\"a, b\",2.0,0.5\n");
    }

    #[test]
    fn prefix_lengths() {
        assert_eq!(prefix_len(1000, 0.05), 50);
        assert_eq!(prefix_len(10, 0.05), 1);
        assert_eq!(prefix_len(7, 1.0), 7);
    }
}

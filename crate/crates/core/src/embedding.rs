//! Sentence-embedding providers.
//!
//! The built-in provider is a smooth-inverse-frequency weighted average of
//! word vectors: each token `w` contributes `a / (a + p(w)) * v(w)` and the sum
//! is divided by the sentence length. `p(w)` is the unigram relative
//! frequency in the speaker corpus. `v(w)` comes from a pretrained word-vector
//! file when one is configured, and otherwise from a Gaussian draw seeded by
//! a hash of the word and a global seed, so the whole pipeline runs offline
//! and reproducibly.
//!
//! No principal-component removal is applied. Estimating the common
//! component needs the whole corpus and would change every cached mean on
//! each increment.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::Sentence;

pub const DEFAULT_DIMENSION: usize = 300;
pub const DEFAULT_SIF_A: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(EmbeddingVector(values))
        } else {
            Err(Error::InvalidParameter("embedding contains non-finite values".into()))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * k).collect())
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Componentwise arithmetic mean.
pub fn mean(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = vectors.first().ok_or(Error::EmptyMean)?;
    let mut acc = vec![0.0; first.dim()];
    for v in vectors {
        if v.dim() != acc.len() {
            return Err(Error::DimensionMismatch(acc.len(), v.dim()));
        }
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(EmbeddingVector(acc.into_iter().map(|a| a / n).collect()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub name: String,
    pub dimension: usize,
    pub deterministic: bool,
    pub version: String,
}

pub trait Embedder: Send + Sync {
    fn descriptor(&self) -> ProviderDescriptor;

    fn embed(&self, tokens: &[String]) -> Result<EmbeddingVector>;

    /// Identifies the vector space. Cached pattern means are only reused by
    /// an embedder with the same fingerprint.
    fn fingerprint(&self) -> String {
        let d = self.descriptor();
        format!("{}/{}/{}", d.name, d.version, d.dimension)
    }

    fn embed_sentence(&self, s: &Sentence) -> Result<EmbeddingVector> {
        self.embed(&s.tokens)
    }
}

/// Unigram relative frequencies over a corpus.
#[derive(Debug, Clone, Default)]
pub struct WordProbabilities {
    counts: HashMap<String, u64>,
    total: u64,
}

impl WordProbabilities {
    pub fn from_corpus(corpus: &[Sentence]) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        for s in corpus {
            for t in &s.tokens {
                *counts.entry(t.clone()).or_insert(0) += 1;
                total += 1;
            }
        }
        WordProbabilities { counts, total }
    }

    /// Unseen words get `1 / (N + V + 1)`.
    pub fn prob(&self, word: &str) -> f64 {
        match self.counts.get(word) {
            Some(&c) => c as f64 / self.total as f64,
            None => 1.0 / (self.total + self.counts.len() as u64 + 1) as f64,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    fn digest(&self) -> String {
        let mut entries: Vec<_> = self.counts.iter().collect();
        entries.sort();
        let mut h = Sha256::new();
        for (w, c) in entries {
            h.update(w.as_bytes());
            h.update([0]);
            h.update(c.to_le_bytes());
        }
        hex8(&h.finalize())
    }
}

fn hex8(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Load a text word-vector file (`word v1 ... vD` per line). A leading
/// `count dim` header line is skipped.
pub fn load_word_vectors(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text)
}

pub fn parse_word_vectors(text: &str) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        let values: Vec<f64> = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("word vectors line {}: {e}", i + 1)))?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("word vectors line {}: bad values", i + 1)));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch(d, values.len()));
            }
            _ => {}
        }
        out.insert(word.to_string(), values);
    }
    Ok(out)
}

/// Deterministic weighted-average provider.
pub struct BuiltinEmbedder {
    dim: usize,
    seed: u64,
    a: f64,
    probs: WordProbabilities,
    pretrained: Option<HashMap<String, Vec<f64>>>,
    fingerprint: String,
    cache: RwLock<HashMap<String, Arc<[f64]>>>,
}

impl std::fmt::Debug for BuiltinEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinEmbedder")
            .field("dim", &self.dim)
            .field("seed", &self.seed)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl BuiltinEmbedder {
    pub fn new(seed: u64, probs: WordProbabilities) -> Self {
        Self::build(DEFAULT_DIMENSION, seed, DEFAULT_SIF_A, probs, None)
    }

    pub fn from_corpus(seed: u64, corpus: &[Sentence]) -> Self {
        Self::new(seed, WordProbabilities::from_corpus(corpus))
    }

    pub fn with_dimension(seed: u64, dim: usize, probs: WordProbabilities) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self::build(dim, seed, DEFAULT_SIF_A, probs, None))
    }

    /// Use pretrained vectors; words missing from the table fall back to
    /// hash-derived vectors of the same dimension.
    pub fn with_word_vectors(
        seed: u64,
        probs: WordProbabilities,
        vectors: HashMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let dim = vectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidParameter("empty word-vector table".into()))?;
        if let Some(v) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(dim, v.len()));
        }
        Ok(Self::build(dim, seed, DEFAULT_SIF_A, probs, Some(vectors)))
    }

    fn build(
        dim: usize,
        seed: u64,
        a: f64,
        probs: WordProbabilities,
        pretrained: Option<HashMap<String, Vec<f64>>>,
    ) -> Self {
        let mut h = Sha256::new();
        if let Some(p) = &pretrained {
            let mut words: Vec<_> = p.iter().collect();
            words.sort_by(|x, y| x.0.cmp(y.0));
            for (w, v) in words {
                h.update(w.as_bytes());
                for x in v {
                    h.update(x.to_le_bytes());
                }
            }
        }
        let fingerprint = format!(
            "builtin-sif/1/{dim}/{seed}/{a}/{}/{}",
            probs.digest(),
            hex8(&h.finalize())
        );
        BuiltinEmbedder {
            dim,
            seed,
            a,
            probs,
            pretrained,
            fingerprint,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn probabilities(&self) -> &WordProbabilities {
        &self.probs
    }

    /// SIF weight `a / (a + p(w))`.
    pub fn weight(&self, word: &str) -> f64 {
        self.a / (self.a + self.probs.prob(word))
    }

    pub fn word_vector(&self, word: &str) -> Arc<[f64]> {
        if let Some(v) = self.cache.read().unwrap().get(word) {
            return v.clone();
        }
        let v: Arc<[f64]> = match self.pretrained.as_ref().and_then(|p| p.get(word)) {
            Some(v) => v.as_slice().into(),
            None => hashed_vector(self.seed, word, self.dim).into(),
        };
        self.cache
            .write()
            .unwrap()
            .entry(word.to_string())
            .or_insert(v)
            .clone()
    }
}

/// Gaussian vector seeded by SHA-256 of the global seed and the word.
pub fn hashed_vector(seed: u64, word: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(word.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

impl Embedder for BuiltinEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            name: "builtin-sif".into(),
            dimension: self.dim,
            deterministic: true,
            version: "1".into(),
        }
    }

    fn embed(&self, tokens: &[String]) -> Result<EmbeddingVector> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        // Summing in sorted order makes permutations of one token multiset
        // embed bit-identically, as the average is order-free.
        let mut sorted: Vec<&String> = tokens.iter().collect();
        sorted.sort_unstable();
        let mut acc = vec![0.0; self.dim];
        for t in sorted {
            let w = self.weight(t);
            for (a, x) in acc.iter_mut().zip(self.word_vector(t).iter()) {
                *a += w * x;
            }
        }
        let n = tokens.len() as f64;
        EmbeddingVector::new(acc.into_iter().map(|a| a / n).collect())
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteEmbedder;

#[cfg(feature = "remote")]
mod remote {
    use std::time::Duration;

    use serde::{Deserialize, Serialize};

    use super::{EmbeddingVector, Embedder, ProviderDescriptor};
    use crate::error::{Error, RemoteError, Result};

    #[derive(Serialize)]
    struct EmbedRequest<'a> {
        tokens: &'a [String],
    }

    #[derive(Deserialize)]
    struct EmbedResponse {
        dim: usize,
        values: Vec<f64>,
    }

    /// Client for an HTTP embedding server: `POST {base}/embed` with
    /// `{"tokens": [...]}`, answered by `{"dim": D, "values": [...]}`.
    ///
    /// A masked-LM server would average-pool the second-to-last hidden layer
    /// over all tokens of the sentence and return that vector.
    pub struct RemoteEmbedder {
        url: String,
        agent: ureq::Agent,
        dim: usize,
    }

    impl RemoteEmbedder {
        /// Connects and learns the dimension with a probe request.
        pub fn connect(base_url: &str, timeout: Duration) -> Result<Self> {
            let agent = ureq::AgentBuilder::new().timeout(timeout).build();
            let url = format!("{}/embed", base_url.trim_end_matches('/'));
            let probe = call(&agent, &url, &["hello".to_string()])?;
            Ok(RemoteEmbedder {
                url,
                agent,
                dim: probe.dim(),
            })
        }

        pub fn url(&self) -> &str {
            &self.url
        }
    }

    fn call(agent: &ureq::Agent, url: &str, tokens: &[String]) -> Result<EmbeddingVector> {
        let resp = agent
            .post(url)
            .send_json(EmbedRequest { tokens })
            .map_err(|e| match e {
                ureq::Error::Status(status, resp) => RemoteError::Status {
                    status,
                    body: resp.into_string().unwrap_or_default(),
                },
                ureq::Error::Transport(t) => RemoteError::Transport(t.to_string()),
            })?;
        let body: EmbedResponse = resp
            .into_json()
            .map_err(|e| RemoteError::Decode(e.to_string()))?;
        if body.dim == 0 || body.values.len() != body.dim {
            return Err(RemoteError::Decode(format!(
                "dim {} but {} values",
                body.dim,
                body.values.len()
            ))
            .into());
        }
        EmbeddingVector::new(body.values)
            .map_err(|_| RemoteError::Decode("non-finite values".into()).into())
    }

    impl Embedder for RemoteEmbedder {
        fn descriptor(&self) -> ProviderDescriptor {
            ProviderDescriptor {
                name: "remote".into(),
                dimension: self.dim,
                deterministic: false,
                version: self.url.clone(),
            }
        }

        fn embed(&self, tokens: &[String]) -> Result<EmbeddingVector> {
            if tokens.is_empty() {
                return Err(Error::EmptySentence);
            }
            let v = call(&self.agent, &self.url, tokens)?;
            if v.dim() != self.dim {
                return Err(RemoteError::Dimension {
                    declared: self.dim,
                    got: v.dim(),
                }
                .into());
            }
            Ok(v)
        }
    }
}

//! Seeded synthetic speaker corpora with planted style n-grams.
//!
//! Background words are drawn uniformly from a `w0 .. wV` vocabulary, so every
//! frequent multi-token n-gram in a generated corpus is (with overwhelming
//! probability) one of the planted phrases or a piece of one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::Sentence;
use crate::miner::NGram;

/// Default planted phrases.
pub const DEFAULT_PLANTED: &[&str] = &[
    "you know",
    "i mean",
    "believe me",
    "try my best to",
    "all over the place",
    "make america great again",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub sentences: usize,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub planted: Vec<NGram>,
    /// Probability that a sentence receives one planted phrase.
    pub plant_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 200,
            vocab_size: 120,
            min_len: 4,
            max_len: 12,
            planted: DEFAULT_PLANTED.iter().map(|p| NGram::parse(p)).collect(),
            plant_rate: 0.6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpeakerCorpus {
    pub sentences: Vec<Sentence>,
    pub planted: Vec<NGram>,
    pub vocab: Vec<String>,
}

impl SpeakerCorpus {
    pub fn generate(cfg: &SynthConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = background_vocab(cfg.vocab_size);
        let sentences = (0..cfg.sentences)
            .map(|_| {
                let len = rng.gen_range(cfg.min_len..=cfg.max_len);
                let mut tokens: Vec<String> =
                    (0..len).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
                if !cfg.planted.is_empty() && rng.gen_bool(cfg.plant_rate) {
                    let phrase = cfg.planted.choose(&mut rng).unwrap();
                    let at = rng.gen_range(0..=tokens.len());
                    tokens.splice(at..at, phrase.tokens().iter().cloned());
                }
                Sentence::from_tokens(tokens)
            })
            .collect();
        SpeakerCorpus {
            sentences,
            planted: cfg.planted.clone(),
            vocab,
        }
    }
}

pub fn background_vocab(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("w{i}")).collect()
}

/// Style-free sentences over `vocab`, one per requested length.
pub fn control_sentences(vocab: &[String], lengths: &[usize], seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lengths
        .iter()
        .map(|&len| {
            Sentence::from_tokens(
                (0..len.max(1))
                    .map(|_| vocab.choose(&mut rng).unwrap().clone())
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig::default();
        let a = SpeakerCorpus::generate(&cfg, 1);
        let b = SpeakerCorpus::generate(&cfg, 1);
        let c = SpeakerCorpus::generate(&cfg, 2);
        assert_eq!(a.sentences, b.sentences);
        assert_ne!(a.sentences, c.sentences);
        assert_eq!(a.sentences.len(), cfg.sentences);
    }

    #[test]
    fn control_lengths_match() {
        let vocab = background_vocab(10);
        let ctl = control_sentences(&vocab, &[3, 5, 1], 9);
        assert_eq!(ctl.iter().map(Sentence::len).collect::<Vec<_>>(), vec![3, 5, 1]);
    }
}

//! Incremental speaking-style mining and pattern-based sentence transformation.
//!
//! The pipeline learns a speaker's style from a growing stream of sentences:
//!
//! 1. [`ingest`] segments and normalizes raw text into token lists.
//! 2. [`miner`] extracts frequent n-grams by sentence support, batch or
//!    incrementally through a negative border.
//! 3. [`patterns`] decomposes every sentence into a wildcard pattern made of
//!    frequent n-grams plus the context that fills the wildcards.
//! 4. [`transformer`] picks the pattern whose contexts best match a new input
//!    sentence, distributes the input's chunks into the wildcards and keeps the
//!    candidate closest to the pattern's original sentences.
//! 5. [`evaluator`] scores outputs with an n-gram language model (fluency in
//!    the speaker's style) and weighted-average word vectors (context kept).
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); [`Exec`] selects the strategy explicitly.

pub mod embedding;
pub mod error;
pub mod evaluator;
mod exec;
pub mod ingest;
pub mod miner;
pub mod patterns;
pub mod session;
pub mod synth;
pub mod transformer;

pub use embedding::{cosine, mean, BuiltinEmbedder, Embedder, EmbeddingVector, ProviderDescriptor};
pub use error::{Error, Result};
pub use exec::Exec;
pub use ingest::{normalize, split_sentences, Sentence, StopwordSet};
pub use miner::{mine_batch, mine_increment, MinerState, NGram};
pub use patterns::{Pattern, PatternRecord, PatternStore, Segment};
pub use transformer::{transform, ChunkMode, TransformConfig, TransformResult};

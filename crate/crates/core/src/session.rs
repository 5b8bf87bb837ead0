//! One speaker's persisted state: miner tables, pattern store, settings and
//! the retained corpus log.
//!
//! The state file is canonical JSON; the corpus log sits next to it as
//! `<state>.corpus`, one raw sentence per line. Both are written through a
//! temporary file and renamed into place.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::BuiltinEmbedder;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{normalize, Sentence, StopwordSet};
use crate::miner::{IncrementSummary, MinerSnapshot, MinerState};
use crate::patterns::{PatternStore, StoreSnapshot, StyleIndex};

pub const SESSION_VERSION: u32 = 1;

/// Write `bytes` to a sibling temporary file, sync it and rename it over
/// `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Exclusive advisory lock on `<state>.lock`, held until dropped.
#[derive(Debug)]
pub struct SessionLock {
    _file: File,
    path: PathBuf,
}

impl SessionLock {
    pub fn acquire(state_path: &Path) -> Result<Self> {
        let path = sidecar(state_path, "lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.try_lock().map_err(|e| match e {
            std::fs::TryLockError::WouldBlock => Error::InvalidParameter(format!(
                "{} is locked by another process",
                state_path.display()
            )),
            std::fs::TryLockError::Error(e) => Error::io(&path, e),
        })?;
        Ok(SessionLock { _file: file, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn sidecar(state_path: &Path, ext: &str) -> PathBuf {
    let mut name = state_path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    state_path.with_file_name(name)
}

/// Corpus log location for a state file.
pub fn corpus_log_path(state_path: &Path) -> PathBuf {
    sidecar(state_path, "corpus")
}

/// Settings fixed at session creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub min_support: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionFile {
    version: u32,
    seed: u64,
    config_fingerprint: String,
    stopword_source: String,
    miner: MinerSnapshot,
    store: StoreSnapshot,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub increment: IncrementSummary,
    /// The style set changed, so the store was rebuilt over the full corpus.
    pub rebuilt: bool,
    pub patterns: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    settings: SessionSettings,
    stopwords: StopwordSet,
    miner: MinerState,
    store: PatternStore,
}

impl Session {
    pub fn new(settings: SessionSettings, stopwords: StopwordSet) -> Result<Self> {
        Ok(Session {
            miner: MinerState::empty(settings.min_support)?,
            store: PatternStore::new(),
            settings,
            stopwords,
        })
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn stopwords(&self) -> &StopwordSet {
        &self.stopwords
    }

    pub fn miner(&self) -> &MinerState {
        &self.miner
    }

    pub fn store(&self) -> &PatternStore {
        &self.store
    }

    /// Digest of everything that shapes the mined state.
    pub fn config_fingerprint(&self) -> String {
        let text = format!(
            "min_support={};seed={};stopwords={}",
            self.settings.min_support,
            self.settings.seed,
            self.stopwords.source()
        );
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Built-in embedder over the retained corpus under the session seed.
    pub fn embedder(&self) -> BuiltinEmbedder {
        BuiltinEmbedder::from_corpus(self.settings.seed, self.miner.corpus())
    }

    /// Mine the increment, then update the store: a changed style set
    /// rebuilds it over the full corpus, otherwise only the increment is
    /// decomposed.
    pub fn ingest(&mut self, sentences: Vec<Sentence>, exec: Exec) -> IngestSummary {
        let sentences: Vec<Sentence> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        let before = self.miner.style_ngrams(&self.stopwords);
        let increment = self.miner.increment(sentences.clone(), exec);
        let after = self.miner.style_ngrams(&self.stopwords);
        let rebuilt = before != after;
        if rebuilt {
            self.store = PatternStore::rebuild(self.miner.corpus(), &after, exec);
        } else {
            self.store.ingest(&sentences, &StyleIndex::new(&after), exec);
        }
        IngestSummary {
            increment,
            rebuilt,
            patterns: self.store.len(),
        }
    }

    /// Canonical state document. `corpus_log` is recorded as given.
    pub fn to_json(&self, corpus_log: Option<String>) -> Result<Vec<u8>> {
        let file = SessionFile {
            version: SESSION_VERSION,
            seed: self.settings.seed,
            config_fingerprint: self.config_fingerprint(),
            stopword_source: self.stopwords.source().to_string(),
            miner: self.miner.snapshot(corpus_log),
            store: self.store.snapshot(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Corpus log contents, one raw sentence per line.
    pub fn corpus_log(&self) -> Vec<u8> {
        let mut out = String::new();
        for s in self.miner.corpus() {
            out.push_str(&s.raw);
            out.push('\n');
        }
        out.into_bytes()
    }

    /// Write the corpus log, then the state file.
    pub fn save(&self, state_path: &Path) -> Result<()> {
        let log = corpus_log_path(state_path);
        atomic_write(&log, &self.corpus_log())?;
        let name = log.file_name().unwrap_or_default().to_string_lossy().into_owned();
        atomic_write(state_path, &self.to_json(Some(name))?)
    }

    /// Load a saved session. A stopword list whose source differs from the
    /// recorded one rebuilds the store under the new list.
    pub fn load(state_path: &Path, stopwords: StopwordSet) -> Result<Self> {
        let bytes = std::fs::read(state_path).map_err(|e| Error::io(state_path, e))?;
        let (file, corpus) = parse_state(&bytes, state_path)?;
        let settings = SessionSettings {
            min_support: file.miner.min_support,
            seed: file.seed,
        };
        let miner = MinerState::from_snapshot(file.miner, corpus)?;
        let mut store = PatternStore::from_snapshot(file.store)?;
        if file.stopword_source != stopwords.source() {
            log::warn!(
                "stopword list changed from {} to {}; rebuilding patterns",
                file.stopword_source,
                stopwords.source()
            );
            store = PatternStore::rebuild(miner.corpus(), &miner.style_ngrams(&stopwords), Exec::auto());
        }
        let session = Session {
            settings,
            stopwords,
            miner,
            store,
        };
        if file.stopword_source == session.stopwords.source()
            && file.config_fingerprint != session.config_fingerprint()
        {
            return Err(Error::InvalidState("config fingerprint does not match settings".into()));
        }
        Ok(session)
    }

    /// Load `state_path` if it exists, otherwise start a fresh session.
    pub fn open(state_path: &Path, settings: SessionSettings, stopwords: StopwordSet) -> Result<Self> {
        if state_path.exists() {
            let s = Self::load(state_path, stopwords)?;
            if s.settings != settings {
                log::warn!(
                    "session keeps its recorded settings (min_support {}, seed {})",
                    s.settings.min_support,
                    s.settings.seed
                );
            }
            Ok(s)
        } else {
            Self::new(settings, stopwords)
        }
    }
}

fn parse_state(bytes: &[u8], state_path: &Path) -> Result<(SessionFile, Vec<Sentence>)> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::InvalidState("missing version".into()))?;
    if version != SESSION_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: SESSION_VERSION,
        });
    }
    let file: SessionFile = serde_json::from_value(value)?;
    let corpus = match &file.miner.corpus_log_path {
        None => Vec::new(),
        Some(rel) => {
            let path = state_path.parent().unwrap_or(Path::new("")).join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lines: Vec<&str> = text.lines().collect();
            let total = file.miner.total_sentences as usize;
            if lines.len() > total {
                // A save interrupted between the two renames leaves a longer log.
                log::warn!("corpus log has {} lines, state expects {total}; truncating", lines.len());
                lines.truncate(total);
            }
            lines.into_iter().map(normalize).collect()
        }
    };
    Ok((file, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SpeakerCorpus, SynthConfig};

    fn settings() -> SessionSettings {
        SessionSettings {
            min_support: 0.05,
            seed: 7,
        }
    }

    fn corpus() -> Vec<Sentence> {
        SpeakerCorpus::generate(&SynthConfig::default(), 4).sentences
    }

    #[test]
    fn chunked_ingest_matches_one_shot() {
        let c = corpus();
        let mut one = Session::new(settings(), StopwordSet::default()).unwrap();
        one.ingest(c.clone(), Exec::auto());
        let mut chunked = Session::new(settings(), StopwordSet::default()).unwrap();
        for part in c.chunks(c.len() / 4) {
            chunked.ingest(part.to_vec(), Exec::auto());
        }
        assert_eq!(one.to_json(None).unwrap(), chunked.to_json(None).unwrap());
        assert!(!one.store().is_empty());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut s = Session::new(settings(), StopwordSet::default()).unwrap();
        s.ingest(corpus(), Exec::auto());
        s.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = Session::load(&path, StopwordSet::default()).unwrap();
        assert!(loaded.miner().same_tables(s.miner()));
        loaded.save(&path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        assert!(corpus_log_path(&path).exists());
    }

    #[test]
    fn version_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        Session::new(settings(), StopwordSet::default()).unwrap().save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
        std::fs::write(&path, text).unwrap();
        let err = Session::load(&path, StopwordSet::default()).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { found: 9, expected: 1 }));
        assert!(err.to_string().contains('9') && err.to_string().contains('1'));
        assert!(err.is_state_format());
    }

    #[test]
    fn longer_log_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut s = Session::new(settings(), StopwordSet::default()).unwrap();
        s.ingest(corpus(), Exec::auto());
        s.save(&path).unwrap();
        let mut log = OpenOptions::new().append(true).open(corpus_log_path(&path)).unwrap();
        writeln!(log, "an extra line").unwrap();
        let loaded = Session::load(&path, StopwordSet::default()).unwrap();
        assert_eq!(loaded.miner().corpus().len(), s.miner().corpus().len());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let held = SessionLock::acquire(&path).unwrap();
        assert!(SessionLock::acquire(&path).is_err());
        drop(held);
        assert!(SessionLock::acquire(&path).is_ok());
    }

    #[test]
    fn changed_stopwords_rebuild_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut s = Session::new(settings(), StopwordSet::default()).unwrap();
        s.ingest(corpus(), Exec::auto());
        s.save(&path).unwrap();
        let custom = StopwordSet::parse("you\nknow\n", "custom");
        let loaded = Session::load(&path, custom.clone()).unwrap();
        let expected = PatternStore::rebuild(
            loaded.miner().corpus(),
            &loaded.miner().style_ngrams(&custom),
            Exec::auto(),
        );
        assert_eq!(loaded.store().instances(), expected.instances());
    }
}

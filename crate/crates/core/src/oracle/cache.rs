//! Append-only record logs backing the annotation and keyphrase caches.
//!
//! Each record is one JSON line. On open the log is compacted (last record per
//! key wins, unreadable lines are dropped) and rewritten atomically; after that
//! every insert appends and flushes one line, so a crash loses at most the line
//! being written.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::hash::Hash;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::concept::ConceptId;

use super::AnnotationRecord;

pub trait LogRecord: Serialize + DeserializeOwned + Clone {
    type Key: Ord + Hash + Clone;
    fn key(&self) -> Self::Key;
}

impl LogRecord for AnnotationRecord {
    type Key = (String, ConceptId);

    fn key(&self) -> Self::Key {
        (self.observation_id.clone(), self.concept_id.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyphraseRecord {
    pub observation_id: String,
    pub phrases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl LogRecord for KeyphraseRecord {
    type Key = String;

    fn key(&self) -> Self::Key {
        self.observation_id.clone()
    }
}

/// Parse a record log, keeping the last record per key. Returns the records
/// and the number of lines that could not be parsed.
pub fn parse_record_log<R: LogRecord>(text: &str) -> (BTreeMap<R::Key, R>, usize) {
    let mut records = BTreeMap::new();
    let mut skipped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<R>(line) {
            Ok(rec) => {
                records.insert(rec.key(), rec);
            }
            Err(_) => skipped += 1,
        }
    }
    (records, skipped)
}

pub struct RecordLog<R: LogRecord> {
    path: Option<PathBuf>,
    records: RwLock<BTreeMap<R::Key, R>>,
    writer: Mutex<Option<File>>,
    skipped_on_load: usize,
}

pub type AnnotationCache = RecordLog<AnnotationRecord>;
pub type KeyphraseCache = RecordLog<KeyphraseRecord>;

impl<R: LogRecord> RecordLog<R> {
    pub fn in_memory() -> Self {
        RecordLog {
            path: None,
            records: RwLock::new(BTreeMap::new()),
            writer: Mutex::new(None),
            skipped_on_load: 0,
        }
    }

    /// Open (creating if needed) and compact the log at `path`.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e),
        };
        let (records, skipped) = parse_record_log::<R>(&text);

        let tmp = path.with_extension("compact.tmp");
        {
            let mut f = File::create(&tmp)?;
            for rec in records.values() {
                serde_json::to_writer(&mut f, rec)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;

        let writer = OpenOptions::new().append(true).open(path)?;
        Ok(RecordLog {
            path: Some(path.to_path_buf()),
            records: RwLock::new(records),
            writer: Mutex::new(Some(writer)),
            skipped_on_load: skipped,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &R::Key) -> Option<R> {
        self.records.read().expect("cache lock").get(key).cloned()
    }

    pub fn contains(&self, key: &R::Key) -> bool {
        self.records.read().expect("cache lock").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unreadable lines dropped during the last compaction.
    pub fn skipped_on_load(&self) -> usize {
        self.skipped_on_load
    }

    pub fn insert(&self, record: R) -> std::io::Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(f) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.records
            .write()
            .expect("cache lock")
            .insert(record.key(), record);
        Ok(())
    }
}

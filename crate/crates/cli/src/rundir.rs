//! Run directory layout, exclusive locking and atomic writes.

use std::fs::{File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const SNAPSHOT: &str = "config.snapshot";
pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES: &str = "samples.jsonl";
pub const UPDATES: &str = "updates.jsonl";
pub const LOCK: &str = "run.lock";

pub struct RunDir {
    root: PathBuf,
    /// Held for the lifetime of the value.
    _lock: File,
}

impl RunDir {
    /// Creates the layout and takes the lock, failing if another process
    /// holds it.
    pub fn open(root: &Path) -> Result<Self, CliError> {
        for sub in ["", "checkpoints", "reports"] {
            std::fs::create_dir_all(root.join(sub)).map_err(|e| CliError::io(root.join(sub), e))?;
        }
        let lock_path = root.join(LOCK);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| CliError::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(CliError::Config(format!(
                    "run directory {} is in use by another process",
                    root.display()
                )))
            }
            Err(TryLockError::Error(e)) => return Err(CliError::io(&lock_path, e)),
        }
        Ok(RunDir { root: root.to_path_buf(), _lock: lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints").join("checkpoint.json")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

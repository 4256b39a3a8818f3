//! One-time index counter. The counter starts at 0 and is incremented
//! before each use, so the first one-time index is 1. A value is persisted
//! before it is handed out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

#[derive(Debug, Error)]
#[error("counter persistence failed: {0}")]
pub struct PersistenceFailure(pub String);

pub trait CounterStore: Send + Sync {
    /// Advances the counter by `n` and persists it, returning the first of
    /// the `n` reserved values.
    fn reserve(&self, n: u64) -> Result<u128, PersistenceFailure>;

    /// Increments, persists, and returns the new value.
    fn next(&self) -> Result<u128, PersistenceFailure> {
        self.reserve(1)
    }

    fn current(&self) -> u128;
}

#[derive(Debug, Default)]
pub struct MemoryCounter(Mutex<u128>);

impl MemoryCounter {
    pub fn starting_at(value: u128) -> Self {
        MemoryCounter(Mutex::new(value))
    }
}

impl CounterStore for MemoryCounter {
    fn reserve(&self, n: u64) -> Result<u128, PersistenceFailure> {
        let mut c = self.0.lock().expect("counter lock");
        let first = *c + 1;
        *c += u128::from(n);
        Ok(first)
    }

    fn current(&self) -> u128 {
        *self.0.lock().expect("counter lock")
    }
}

/// Counter persisted as a decimal in a file, replaced atomically on every
/// increment.
#[derive(Debug)]
pub struct FileCounter {
    path: PathBuf,
    value: Mutex<u128>,
    sync: bool,
}

impl FileCounter {
    /// Opens the counter file, treating a missing file as 0. With `sync`
    /// set every write is flushed to disk before the rename.
    pub fn open(path: impl Into<PathBuf>, sync: bool) -> Result<Self, PersistenceFailure> {
        let path = path.into();
        let value = match fs::read_to_string(&path) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|e| PersistenceFailure(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(PersistenceFailure(format!("{}: {e}", path.display()))),
        };
        Ok(FileCounter { path, value: Mutex::new(value), sync })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub(crate) fn write_atomic(path: &Path, contents: &[u8], sync: bool) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)
}

impl CounterStore for FileCounter {
    fn reserve(&self, n: u64) -> Result<u128, PersistenceFailure> {
        let mut c = self.value.lock().expect("counter lock");
        let last = *c + u128::from(n);
        write_atomic(&self.path, last.to_string().as_bytes(), self.sync)
            .map_err(|e| PersistenceFailure(format!("{}: {e}", self.path.display())))?;
        let first = *c + 1;
        *c = last;
        Ok(first)
    }

    fn current(&self) -> u128 {
        *self.value.lock().expect("counter lock")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_counter_starts_at_one() {
        let c = MemoryCounter::default();
        assert_eq!(c.next().unwrap(), 1);
        assert_eq!(c.next().unwrap(), 2);
    }

    #[test]
    fn file_counter_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counter");
        {
            let c = FileCounter::open(&path, false).unwrap();
            for expected in 1..=5 {
                assert_eq!(c.next().unwrap(), expected);
            }
        }
        let c = FileCounter::open(&path, true).unwrap();
        assert_eq!(c.current(), 5);
        assert_eq!(c.next().unwrap(), 6);
    }

    #[test]
    fn reservations_are_contiguous() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counter");
        let c = FileCounter::open(&path, false).unwrap();
        assert_eq!(c.reserve(3).unwrap(), 1);
        assert_eq!(c.next().unwrap(), 4);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "4");
        let m = MemoryCounter::starting_at(10);
        assert_eq!(m.reserve(5).unwrap(), 11);
        assert_eq!(m.current(), 15);
    }

    #[test]
    fn unwritable_path_blocks_issuance() {
        let dir = tempfile::tempdir().unwrap();
        let c = FileCounter::open(dir.path().join("missing-dir").join("counter"), false).unwrap();
        assert!(c.next().is_err());
        assert_eq!(c.current(), 0);
    }

    #[test]
    fn corrupt_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counter");
        std::fs::write(&path, "not a number").unwrap();
        assert!(FileCounter::open(&path, false).is_err());
    }
}

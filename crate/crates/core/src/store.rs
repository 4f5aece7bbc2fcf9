//! Key-value persistence for monitoring configuration and results.
//!
//! Keys are short sequences of restricted-alphabet segments, rendered with
//! `/`. The filesystem backend maps every non-final segment to a directory
//! named `<segment>.d` and the final segment to a file `<segment>.json`, so a
//! key can hold a document and also be the prefix of other keys.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};

pub const MAX_SEGMENTS: usize = 8;
pub const MAX_KEY_LEN: usize = 512;

const DIR_SUFFIX: &str = ".d";
const DOC_SUFFIX: &str = ".json";

/// Returns true if `s` is a valid key segment (and therefore a valid id).
pub fn is_valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// A validated hierarchical key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StoreKey {
    segments: Vec<String>,
}

impl StoreKey {
    pub fn new<I, S>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() || segments.len() > MAX_SEGMENTS {
            return Err(Error::Key(format!(
                "keys need 1 to {MAX_SEGMENTS} segments, got {}",
                segments.len()
            )));
        }
        if let Some(bad) = segments.iter().find(|s| !is_valid_segment(s)) {
            return Err(Error::Key(format!(
                "segment `{bad}` must match [A-Za-z0-9._-]+"
            )));
        }
        let key = Self { segments };
        if key.to_string().len() > MAX_KEY_LEN {
            return Err(Error::Key(format!("key longer than {MAX_KEY_LEN} bytes")));
        }
        Ok(key)
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    /// Append one segment.
    pub fn child(&self, segment: impl Into<String>) -> Result<Self> {
        let mut segments = self.segments.clone();
        segments.push(segment.into());
        Self::new(segments)
    }

    /// Whole-segment prefix test; a key is a prefix of itself.
    pub fn starts_with(&self, prefix: &StoreKey) -> bool {
        self.segments.len() >= prefix.segments.len()
            && self.segments[..prefix.segments.len()] == prefix.segments[..]
    }
}

impl fmt::Display for StoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("/"))
    }
}

impl FromStr for StoreKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.split('/'))
    }
}

/// A stored body plus its write time.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDocument {
    pub key: StoreKey,
    pub body: String,
    pub written_at: DateTime<Utc>,
}

/// Operations every metadata backend provides.
pub trait KvStore: Send + Sync {
    /// Durably write `body` under `key`, atomically replacing any previous body.
    fn put(&self, key: &StoreKey, body: &str) -> Result<()>;

    /// Fetch the body under `key`; `Ok(None)` when absent.
    fn get(&self, key: &StoreKey) -> Result<Option<StoredDocument>>;

    /// All keys equal to or below `prefix`, sorted by rendered key.
    fn list(&self, prefix: &StoreKey) -> Result<Vec<StoreKey>>;

    /// Remove every key listed under `prefix`; returns how many were removed.
    fn delete(&self, prefix: &StoreKey) -> Result<usize>;

    /// Remove exactly one key, leaving anything below it. Returns whether it existed.
    fn remove(&self, key: &StoreKey) -> Result<bool>;
}

/// Filesystem-backed store rooted at a directory.
#[derive(Debug, Clone)]
pub struct FsStore {
    root: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| Error::Storage {
            key: root.display().to_string(),
            source,
        })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir_for(&self, segments: &[String]) -> PathBuf {
        let mut path = self.root.clone();
        for s in segments {
            path.push(format!("{s}{DIR_SUFFIX}"));
        }
        path
    }

    fn file_for(&self, key: &StoreKey) -> PathBuf {
        let (last, parents) = key.segments.split_last().expect("keys are non-empty");
        self.dir_for(parents).join(format!("{last}{DOC_SUFFIX}"))
    }

    fn storage_err(key: &StoreKey) -> impl FnOnce(io::Error) -> Error + '_ {
        move |source| Error::Storage {
            key: key.to_string(),
            source,
        }
    }

    fn collect(&self, dir: &Path, prefix: &mut Vec<String>, out: &mut Vec<StoreKey>) -> io::Result<()> {
        let entries = match fs::read_dir(dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e),
        };
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let file_type = entry.file_type()?;
            if file_type.is_dir() {
                if let Some(seg) = name.strip_suffix(DIR_SUFFIX).filter(|s| is_valid_segment(s)) {
                    prefix.push(seg.to_string());
                    self.collect(&entry.path(), prefix, out)?;
                    prefix.pop();
                }
            } else if let Some(seg) = name.strip_suffix(DOC_SUFFIX).filter(|s| is_valid_segment(s)) {
                let mut segments = prefix.clone();
                segments.push(seg.to_string());
                if let Ok(key) = StoreKey::new(segments) {
                    out.push(key);
                }
            }
        }
        Ok(())
    }
}

impl KvStore for FsStore {
    fn put(&self, key: &StoreKey, body: &str) -> Result<()> {
        let target = self.file_for(key);
        let dir = target.parent().expect("document paths have a parent");
        fs::create_dir_all(dir).map_err(Self::storage_err(key))?;
        // The temp name ends in digits, so it never collides with a key's file or directory.
        let tmp = dir.join(format!(
            "{}.tmp{}x{}",
            key.segments.last().expect("non-empty"),
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let write = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &target)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Self::storage_err(key)(e)
        })
    }

    fn get(&self, key: &StoreKey) -> Result<Option<StoredDocument>> {
        let path = self.file_for(key);
        let body = match fs::read_to_string(&path) {
            Ok(body) => body,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Self::storage_err(key)(e)),
        };
        let written_at = fs::metadata(&path)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .map_err(Self::storage_err(key))?;
        Ok(Some(StoredDocument {
            key: key.clone(),
            body,
            written_at,
        }))
    }

    fn list(&self, prefix: &StoreKey) -> Result<Vec<StoreKey>> {
        let mut out = Vec::new();
        if self.file_for(prefix).is_file() {
            out.push(prefix.clone());
        }
        let mut segments = prefix.segments.clone();
        self.collect(&self.dir_for(&prefix.segments), &mut segments, &mut out)
            .map_err(Self::storage_err(prefix))?;
        out.sort_by_cached_key(|k| k.to_string());
        Ok(out)
    }

    fn delete(&self, prefix: &StoreKey) -> Result<usize> {
        let keys = self.list(prefix)?;
        for key in &keys {
            match fs::remove_file(self.file_for(key)) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(Self::storage_err(key)(e)),
            }
        }
        // Drop the now document-free subtree; stray temp files go with it.
        match fs::remove_dir_all(self.dir_for(&prefix.segments)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(Self::storage_err(prefix)(e)),
        }
        Ok(keys.len())
    }

    fn remove(&self, key: &StoreKey) -> Result<bool> {
        match fs::remove_file(self.file_for(key)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(Self::storage_err(key)(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> StoreKey {
        s.parse().unwrap()
    }

    fn store() -> (tempfile::TempDir, FsStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open(dir.path().join("monitoring")).unwrap();
        (dir, store)
    }

    #[test]
    fn key_validation() {
        assert!(StoreKey::new(["a/b"]).is_err());
        assert!(StoreKey::new([""]).is_err());
        assert!(StoreKey::new(Vec::<String>::new()).is_err());
        assert!(StoreKey::new(["a"; 9]).is_err());
        assert!(StoreKey::new(["x".repeat(513)]).is_err());
        assert!(StoreKey::new(["m1", "2022-03-20", "f_1.x"]).is_ok());
        assert!("model//m".parse::<StoreKey>().is_err());
        assert_eq!(key("model/m1/monitor/d1").to_string(), "model/m1/monitor/d1");
    }

    #[test]
    fn put_get_overwrite() {
        let (_d, s) = store();
        let k = key("model/m1");
        assert!(s.get(&k).unwrap().is_none());
        s.put(&k, "").unwrap();
        assert_eq!(s.get(&k).unwrap().unwrap().body, "");
        s.put(&k, "{\"a\":1}").unwrap();
        s.put(&k, "{\"a\":2}").unwrap();
        assert_eq!(s.get(&k).unwrap().unwrap().body, "{\"a\":2}");
        assert!(s.remove(&k).unwrap());
        assert!(s.get(&k).unwrap().is_none());
        assert!(!s.remove(&k).unwrap());
    }

    #[test]
    fn list_is_whole_segment_and_sorted() {
        let (_d, s) = store();
        assert!(s.list(&key("model")).unwrap().is_empty());
        for k in [
            "model/m1",
            "model/m1/monitor/d1/metrics/2022-03-21/f1",
            "model/m1/monitor/d1/metrics/2022-03-20/f2",
            "model/m1/monitor/d1/metrics/2022-03-20/f1",
            "model/m10",
            "model/m10/monitor/x",
        ] {
            s.put(&key(k), "{}").unwrap();
        }
        let listed: Vec<String> = s
            .list(&key("model/m1"))
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(
            listed,
            [
                "model/m1",
                "model/m1/monitor/d1/metrics/2022-03-20/f1",
                "model/m1/monitor/d1/metrics/2022-03-20/f2",
                "model/m1/monitor/d1/metrics/2022-03-21/f1",
            ]
        );
        assert_eq!(s.list(&key("model/m1/monitor/d1/metrics")).unwrap().len(), 3);
    }

    #[test]
    fn key_and_prefix_coexist() {
        let (_d, s) = store();
        // A segment that looks like a document file name must not collide.
        s.put(&key("a/b.json"), "leaf").unwrap();
        s.put(&key("a/b.json/c"), "child").unwrap();
        s.put(&key("a/b"), "other").unwrap();
        assert_eq!(s.get(&key("a/b.json")).unwrap().unwrap().body, "leaf");
        assert_eq!(s.get(&key("a/b")).unwrap().unwrap().body, "other");
        assert_eq!(s.list(&key("a")).unwrap().len(), 3);
    }

    #[test]
    fn delete_matches_list() {
        let (_d, s) = store();
        assert_eq!(s.delete(&key("model/m1")).unwrap(), 0);
        for k in ["model/m1", "model/m1/monitor/d1", "model/m1/monitor/d2", "model/m2"] {
            s.put(&key(k), "{}").unwrap();
        }
        let listed = s.list(&key("model/m1/monitor/d1")).unwrap();
        assert_eq!(s.delete(&key("model/m1/monitor/d1")).unwrap(), listed.len());
        assert!(s.get(&key("model/m1/monitor/d1")).unwrap().is_none());
        assert!(s.get(&key("model/m1/monitor/d2")).unwrap().is_some());
        assert_eq!(s.delete(&key("model")).unwrap(), 3);
        assert!(s.list(&key("model")).unwrap().is_empty());
    }

    #[test]
    fn concurrent_readers_see_whole_bodies() {
        let (_d, s) = store();
        let k = key("model/m1");
        let a = "a".repeat(200_000);
        let b = "b".repeat(300_000);
        s.put(&k, &a).unwrap();
        std::thread::scope(|scope| {
            scope.spawn(|| {
                for i in 0..50 {
                    s.put(&k, if i % 2 == 0 { &b } else { &a }).unwrap();
                }
            });
            scope.spawn(|| {
                for _ in 0..200 {
                    let body = s.get(&k).unwrap().unwrap().body;
                    assert!(body == a || body == b, "torn read of {} bytes", body.len());
                }
            });
        });
    }
}

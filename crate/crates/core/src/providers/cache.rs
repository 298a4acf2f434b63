//! Content-addressed response cache.
//!
//! Every entry lives in `<dir>/<digest>.json` as `{"request": {...}, "response": ...}`.
//! Writes go to a temp file in the same directory and are renamed into place,
//! so readers only ever observe complete entries. Replay fixture directories
//! use the same layout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey {
    digest: String,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    kind: &'a str,
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

impl CacheKey {
    /// SHA-256 over the compact JSON object
    /// `{"kind","model","prompt","temperature","max_tokens"}` in that field order.
    pub fn for_request(kind: &str, model: &str, prompt: &str, temperature: f64, max_tokens: u32) -> Self {
        let canonical = CanonicalRequest { kind, model, prompt, temperature, max_tokens };
        let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
        Self { digest: sha256_hex(bytes) }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn file_name(&self) -> String {
        format!("{}.json", self.digest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: serde_json::Value,
    pub response: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache directory {0} is read-only")]
    ReadOnly(PathBuf),
}

#[derive(Debug, thiserror::Error)]
pub enum CachedCallError<E> {
    #[error(transparent)]
    Compute(E),
    #[error(transparent)]
    Cache(CacheError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct CacheStore {
    dir: PathBuf,
    writable: bool,
}

impl CacheStore {
    /// Opens (creating if needed) a writable cache and probes that it accepts writes,
    /// so permission problems surface before any provider call.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        let io = |source| CacheError::Io { path: dir.clone(), source };
        fs::create_dir_all(&dir).map_err(io)?;
        tempfile::NamedTempFile::new_in(&dir).map_err(|_| CacheError::ReadOnly(dir.clone()))?;
        Ok(Self { dir, writable: true })
    }

    pub fn open_read_only(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(CacheError::Io { path: dir, source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory") });
        }
        Ok(Self { dir, writable: false })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// Returns the stored entry; unreadable or malformed files count as misses.
    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.path(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(CacheError::Io { path, source }),
        }
    }

    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> Result<(), CacheError> {
        if !self.writable {
            return Err(CacheError::ReadOnly(self.dir.clone()));
        }
        let io = |source| CacheError::Io { path: self.dir.clone(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        tmp.write_all(&bytes).map_err(io)?;
        tmp.write_all(b"\n").map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(self.path(key)).map_err(|e| io(e.error))?;
        Ok(())
    }

    /// Serves a hit from disk; on a miss runs `compute` once and stores its result.
    ///
    /// Concurrent misses on one key may both compute; the rename makes the
    /// last complete write win.
    pub fn cached_call<E, F>(&self, key: &CacheKey, compute: F) -> Result<CacheEntry, CachedCallError<E>>
    where
        F: FnOnce() -> Result<(serde_json::Value, serde_json::Value), E>,
    {
        if let Some(hit) = self.get(key).map_err(CachedCallError::Cache)? {
            return Ok(hit);
        }
        let (request, response) = compute().map_err(CachedCallError::Compute)?;
        let entry = CacheEntry { request, response };
        self.put(key, &entry).map_err(CachedCallError::Cache)?;
        Ok(entry)
    }

    fn entry_files(&self) -> Result<Vec<PathBuf>, CacheError> {
        let io = |source| CacheError::Io { path: self.dir.clone(), source };
        let mut files = Vec::new();
        for item in fs::read_dir(&self.dir).map_err(io)? {
            let path = item.map_err(io)?.path();
            let is_entry = path.extension().is_some_and(|e| e == "json")
                && path.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()));
            if is_entry {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    }

    pub fn stats(&self) -> Result<CacheStats, CacheError> {
        let mut stats = CacheStats { entries: 0, bytes: 0 };
        for path in self.entry_files()? {
            let meta = fs::metadata(&path).map_err(|source| CacheError::Io { path: path.clone(), source })?;
            stats.entries += 1;
            stats.bytes += meta.len();
        }
        Ok(stats)
    }

    /// Removes every entry file; returns how many were deleted.
    pub fn clear(&self) -> Result<usize, CacheError> {
        if !self.writable {
            return Err(CacheError::ReadOnly(self.dir.clone()));
        }
        let files = self.entry_files()?;
        for path in &files {
            fs::remove_file(path).map_err(|source| CacheError::Io { path: path.clone(), source })?;
        }
        Ok(files.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::cell::Cell;

    #[test]
    fn golden_digests() {
        // Reference values from Python:
        // hashlib.sha256(json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode()).hexdigest()
        let cases = [
            (
                CacheKey::for_request("chat", "gpt-3.5-turbo", "What is the capital of France?", 0.0, 256),
                "d793b3a896f84ef457901d29dc81282a46d02ce4887780eb388a3d6b70122577",
            ),
            (
                CacheKey::for_request("chat", "gpt-4", "For the question: x", 1.0, 1024),
                "0305ad619b7abc8a64ef58c5ab66400b08f3e90de176f1651128d7c229b766db",
            ),
            (
                CacheKey::for_request("embedding", "text-embedding-3-small", "héllo", 0.0, 16),
                "e54a54262626058af06bb8447a3e727022007d40ca81ea4db8c90037c4b863a7",
            ),
        ];
        for (key, expected) in cases {
            assert_eq!(key.digest(), expected);
        }
    }

    #[test]
    fn miss_then_hit_computes_once() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::for_request("chat", "m", "p", 0.0, 8);
        let calls = Cell::new(0);
        let compute = || -> Result<_, ()> {
            calls.set(calls.get() + 1);
            Ok((json!({"prompt": "p"}), json!("answer")))
        };
        let a = store.cached_call(&key, compute).unwrap();
        let b = store.cached_call(&key, compute).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.response, json!("answer"));
        assert_eq!(calls.get(), 1);
        assert_eq!(store.stats().unwrap().entries, 1);
    }

    #[test]
    fn truncated_entry_is_a_miss_and_gets_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::for_request("chat", "m", "p", 0.0, 8);
        fs::write(dir.path().join(key.file_name()), b"{\"request\": {\"pro").unwrap();
        assert_eq!(store.get(&key).unwrap(), None);
        let entry = store.cached_call(&key, || Ok::<_, ()>((json!({}), json!("fresh")))).unwrap();
        assert_eq!(entry.response, json!("fresh"));
        assert_eq!(store.get(&key).unwrap().unwrap().response, json!("fresh"));
    }

    #[test]
    fn compute_errors_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::for_request("chat", "m", "p", 0.0, 8);
        let err = store.cached_call(&key, || Err::<(serde_json::Value, serde_json::Value), _>("boom"));
        assert!(matches!(err, Err(CachedCallError::Compute("boom"))));
        assert_eq!(store.get(&key).unwrap(), None);
    }

    #[cfg(unix)]
    #[test]
    fn read_only_directory_fails_at_open() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let ro = dir.path().join("ro");
        fs::create_dir(&ro).unwrap();
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o555)).unwrap();
        // Root ignores directory permissions; only assert when the probe can observe them.
        if fs::write(ro.join("probe"), b"x").is_err() {
            assert!(matches!(CacheStore::open(&ro), Err(CacheError::ReadOnly(_))));
        }
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o755)).unwrap();
    }

    #[test]
    fn clear_removes_entries_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        for p in ["a", "b"] {
            let key = CacheKey::for_request("chat", "m", p, 0.0, 8);
            store.put(&key, &CacheEntry { request: json!({}), response: json!(p) }).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), b"keep").unwrap();
        assert_eq!(store.clear().unwrap(), 2);
        assert!(dir.path().join("notes.txt").exists());
        assert_eq!(store.stats().unwrap().entries, 0);
    }

    #[test]
    fn read_only_store_refuses_writes() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open_read_only(dir.path()).unwrap();
        let key = CacheKey::for_request("chat", "m", "p", 0.0, 8);
        assert!(matches!(store.put(&key, &CacheEntry { request: json!({}), response: json!("x") }), Err(CacheError::ReadOnly(_))));
    }
}

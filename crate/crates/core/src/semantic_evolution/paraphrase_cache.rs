use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 over the prompt, a NUL separator, and the model name, hex encoded.
///
/// Only these two inputs select a paraphrase; timeouts, retry counts and the
/// endpoint do not.
pub fn cache_key(prompt: &str, model_name: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(model_name.as_bytes());
    hex::encode(hasher.finalize())
}

/// One UTF-8 text file per key.
#[derive(Debug, Clone)]
pub struct ParaphraseCache {
    dir: PathBuf,
}

impl ParaphraseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>> {
        let path = self.path_for(key);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn put(&self, key: &str, text: &str) -> Result<()> {
        let target = self.path_for(key);
        let tmp = self.dir.join(format!(
            ".{key}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let io = |e| Error::io(&tmp, e);
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        drop(f);
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_prompt_and_model_only() {
        let a = cache_key("p", "m1");
        assert_eq!(a, cache_key("p", "m1"));
        assert_ne!(a, cache_key("p", "m2"));
        assert_ne!(a, cache_key("q", "m1"));
        assert_ne!(cache_key("ab", "c"), cache_key("a", "bc"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ParaphraseCache::open(dir.path().join("c")).unwrap();
        assert_eq!(cache.get("k").unwrap(), None);
        cache.put("k", "héllo").unwrap();
        assert_eq!(cache.get("k").unwrap().as_deref(), Some("héllo"));
        cache.put("k", "again").unwrap();
        assert_eq!(cache.get("k").unwrap().as_deref(), Some("again"));
        let leftovers = std::fs::read_dir(cache.dir())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
            .count();
        assert_eq!(leftovers, 0);
    }
}

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;

/// Everything that determines a completion. Stored verbatim in each cache
/// entry so a key collision can never return another prompt's answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKeyPreimage {
    pub template: String,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
}

impl CacheKeyPreimage {
    pub fn key(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("preimage serializes"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    preimage: CacheKeyPreimage,
    completion: String,
    latency_ms: u64,
}

/// Content-addressed JSON files, one per key. Writes go through a temporary
/// file and an atomic rename.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ResponseCache {
            dir: dir.to_path_buf(),
        })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Returns the cached completion and its original latency.
    pub fn get(&self, preimage: &CacheKeyPreimage) -> Option<(String, u64)> {
        let text = std::fs::read_to_string(self.path_for(&preimage.key())).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        if entry.preimage != *preimage {
            tracing::warn!(key = %preimage.key(), "cache key collision; treating as miss");
            return None;
        }
        Some((entry.completion, entry.latency_ms))
    }

    pub fn put(
        &self,
        preimage: &CacheKeyPreimage,
        completion: &str,
        latency_ms: u64,
    ) -> std::io::Result<()> {
        let key = preimage.key();
        let entry = CacheEntry {
            preimage: preimage.clone(),
            completion: completion.to_string(),
            latency_ms,
        };
        let tmp = self.dir.join(format!(
            "{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        std::fs::rename(tmp, self.path_for(&key))
    }
}

//! Content-addressed cache of augmentation records: one JSON file per
//! cache key under the cache directory, written atomically.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::augment::AugmentationRecord;
use crate::error::{Error, Result};

/// Stable hash of everything that determines a completion.
pub fn cache_key(
    mode: &str,
    group_id: &str,
    target: &str,
    provider_identity: &str,
    template_version: &str,
) -> String {
    let mut hasher = Sha256::new();
    for part in [mode, group_id, target, provider_identity, template_version] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct AugmentCache {
    dir: PathBuf,
}

impl AugmentCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(AugmentCache {
            dir: dir.to_path_buf(),
        })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<AugmentationRecord>> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        let raw = std::fs::read_to_string(&path)?;
        let record = serde_json::from_str(&raw)
            .map_err(|e| Error::Cache(format!("corrupt cache entry {key}: {e}")))?;
        Ok(Some(record))
    }

    pub fn put(&self, record: &AugmentationRecord) -> Result<()> {
        let path = self.path_for(&record.cache_key);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(
            &tmp,
            serde_json::to_string_pretty(record).expect("record serializes"),
        )?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

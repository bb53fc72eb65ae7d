//! On-disk completion cache: one JSON file per cache key, written atomically
//! via a temp file so concurrent writers can never expose a torn record.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::{CompletionRecord, GatewayError};

#[derive(Debug, Clone)]
pub struct CompletionCache {
    dir: PathBuf,
}

impl CompletionCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)
            .map_err(|e| GatewayError::Cache(format!("create {}: {e}", dir.display())))?;
        Ok(CompletionCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn lookup(&self, key: &str) -> Result<Option<CompletionRecord>, GatewayError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("read {}: {e}", path.display()))),
        };
        let record: CompletionRecord = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Cache(format!("corrupt record {}: {e}", path.display())))?;
        Ok(Some(record))
    }

    pub fn store(&self, record: &CompletionRecord) -> Result<(), GatewayError> {
        let path = self.path_for(&record.cache_key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .map_err(|e| GatewayError::Cache(format!("temp file in {}: {e}", self.dir.display())))?;
        let json = serde_json::to_string(record)
            .map_err(|e| GatewayError::Cache(format!("serialize record: {e}")))?;
        tmp.write_all(json.as_bytes())
            .map_err(|e| GatewayError::Cache(format!("write record: {e}")))?;
        tmp.persist(&path)
            .map_err(|e| GatewayError::Cache(format!("persist {}: {e}", path.display())))?;
        Ok(())
    }

    /// Number of records on disk.
    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

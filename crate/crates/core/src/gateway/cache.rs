//! Append-only response cache, one JSON record per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, Provider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key_hash: String,
    pub config_digest: String,
    pub prompt: String,
    pub raw_text: String,
    pub timestamp: u64,
}

pub fn cache_key(provider: Provider, model_name: &str, temperature: f64, prompt: &str, repetition_tag: u64) -> String {
    let mut hasher = Sha256::new();
    for part in [
        provider.as_str().as_bytes(),
        model_name.as_bytes(),
        &temperature.to_bits().to_le_bytes(),
        prompt.as_bytes(),
        &repetition_tag.to_le_bytes(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    /// In-memory only.
    pub fn memory() -> Self {
        ResponseCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads existing records from `path` (if any) and appends new ones to it.
    /// A truncated last line from an interrupted run is ignored.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if let Ok(record) = serde_json::from_str::<CacheRecord>(&line) {
                    entries.insert(record.key_hash, record.raw_text);
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        // terminate a partial line left by an interrupted write
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        if len > 0 && !std::fs::read(&path).map_err(|e| Error::io(&path, e))?.ends_with(b"\n") {
            file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(ResponseCache {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: String, config: &ModelConfig, prompt: &str, raw_text: &str) -> Result<()> {
        let record = CacheRecord {
            key_hash: key.clone(),
            config_digest: config.digest(),
            prompt: prompt.to_string(),
            raw_text: raw_text.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
            file.flush().map_err(|e| Error::io(&path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, raw_text.to_string());
        Ok(())
    }
}

//! Append-only JSONL response cache.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use dcsft_core::dataset::sha256_hex;
use dcsft_core::{Sample, SamplingParams};
use serde::{Deserialize, Serialize};

use crate::SamplerError;

/// Hex SHA-256 over everything that determines a sample's responses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(sample: &Sample, params: &SamplingParams) -> Self {
        // A JSON array gives an unambiguous encoding of the tuple.
        let tuple = serde_json::json!([
            params.model_id,
            sample.id,
            sample.prompt,
            sample.image_ref,
            params.temperature,
            params.top_p,
            params.g,
            params.seed,
        ]);
        CacheKey(sha256_hex(tuple.to_string().as_bytes()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// `g` raw responses for one sample; also the cache line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub key: CacheKey,
    pub sample_id: String,
    pub model: String,
    pub params: SamplingParams,
    pub responses: Vec<String>,
}

impl ResponseSet {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("response set serializes");
        s.push('\n');
        s
    }
}

/// Reads a JSONL file of response sets (the cache and `sample` output share
/// the format).
pub fn read_response_sets(path: impl AsRef<Path>) -> Result<Vec<ResponseSet>, SamplerError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| cache_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| cache_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let set: ResponseSet = serde_json::from_str(&line).map_err(|e| SamplerError::Cache {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(set);
    }
    Ok(out)
}

pub fn write_response_sets(path: impl AsRef<Path>, sets: &[ResponseSet]) -> Result<(), SamplerError> {
    let path = path.as_ref();
    let body: String = sets.iter().map(ResponseSet::to_json_line).collect();
    fs::write(path, body).map_err(|e| cache_err(path, e))
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> SamplerError {
    SamplerError::Cache {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Concurrent reads, serialized appends. Later lines win on duplicate keys.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, ResponseSet>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a cache file. A torn final line left by a
    /// crash is skipped; corruption anywhere else is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SamplerError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| cache_err(&path, e))?;
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ResponseSet>(line) {
                    Ok(set) => {
                        entries.insert(set.key.clone(), set);
                    }
                    Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                        log::warn!("{}: ignoring torn final line: {e}", path.display());
                    }
                    Err(e) => {
                        return Err(SamplerError::Cache {
                            path,
                            message: format!("line {}: {e}", i + 1),
                        })
                    }
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| cache_err(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| cache_err(&path, e))?;
        // Drop a torn tail so the next append starts on a fresh line.
        let bytes = fs::read(&path).map_err(|e| cache_err(&path, e))?;
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64).map_err(|e| cache_err(&path, e))?;
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<ResponseSet> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends to disk first, then publishes in memory.
    pub fn insert(&self, set: ResponseSet) -> Result<(), SamplerError> {
        {
            let mut writer = self.writer.lock().expect("cache writer lock");
            if let Some(file) = writer.as_mut() {
                let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
                file.write_all(set.to_json_line().as_bytes())
                    .and_then(|_| file.flush())
                    .map_err(|e| cache_err(path, e))?;
            }
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(set.key.clone(), set);
        Ok(())
    }
}

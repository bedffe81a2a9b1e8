//! JSONL sample files.
//!
//! One object per line:
//! `{"id", "task", "prompt", "image"?, "gold": {"label"|"box"|"answer": ..}, "meta"?}`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{GoldAnswer, Sample, TaskKind};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: String,
    task: TaskKind,
    prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    gold: GoldAnswer,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, serde_json::Value>,
}

fn meta_to_strings(meta: BTreeMap<String, serde_json::Value>) -> BTreeMap<String, String> {
    meta.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k, s)
        })
        .collect()
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        SampleRecord {
            id: s.id.clone(),
            task: s.task_kind,
            prompt: s.prompt.clone(),
            image: s.image_ref.clone(),
            gold: s.gold.clone(),
            meta: s
                .meta
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        }
    }
}

/// Parses one JSONL line into a validated sample.
pub fn parse_sample_line(line: &str) -> Result<Sample> {
    let rec: SampleRecord = serde_json::from_str(line)?;
    let sample = Sample {
        id: rec.id,
        task_kind: rec.task,
        prompt: rec.prompt,
        image_ref: rec.image,
        gold: rec.gold,
        meta: meta_to_strings(rec.meta),
    };
    sample.validate()?;
    Ok(sample)
}

/// Reads samples from any reader; `origin` only labels error messages.
/// Blank lines are skipped but still counted for line numbers.
pub fn read_dataset(reader: impl Read, origin: &Path) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_sample_line(&line).map_err(|e| Error::Malformed {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::DuplicateId {
                id: sample.id,
                line: line_no,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Loads a JSONL dataset in file order, rejecting malformed lines and
/// duplicate ids.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, path)
}

pub fn sample_to_json_line(sample: &Sample) -> Result<String> {
    Ok(serde_json::to_string(&SampleRecord::from(sample))?)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in samples {
        out.extend_from_slice(sample_to_json_line(s)?.as_bytes());
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

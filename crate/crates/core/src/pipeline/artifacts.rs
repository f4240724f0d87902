//! Line-delimited JSON artifacts. The first line is an [`ArtifactHeader`];
//! each following line is one record. Files above the configured size are
//! written as `<name>.gz` with a fixed gzip header so output bytes depend
//! only on content.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::hashing::sha256_hex;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub artifact: String,
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl ArtifactHeader {
    pub fn new(artifact: &str, seed: Option<u64>) -> ArtifactHeader {
        ArtifactHeader {
            artifact: artifact.to_owned(),
            schema_version: SCHEMA_VERSION,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

/// Location and digest of a written file, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn gz_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".gz");
    PathBuf::from(s)
}

/// Writes `bytes` to `path` (or `path.gz` when over `gzip_threshold`),
/// removing the other variant, and returns the entry for the file written.
pub fn write_bytes(run_dir: &Path, name: &str, bytes: &[u8], gzip_threshold: u64) -> Result<FileEntry, PipelineError> {
    let plain = run_dir.join(name);
    let gz = gz_path(&plain);
    let (target, other, content) = if bytes.len() as u64 > gzip_threshold {
        let mut enc = GzBuilder::new().mtime(0).write(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| PipelineError::io(&gz, e))?;
        let out = enc.finish().map_err(|e| PipelineError::io(&gz, e))?;
        (gz, plain, out)
    } else {
        (plain, gz, bytes.to_vec())
    };
    write_atomic(&target, &content)?;
    if other.exists() {
        fs::remove_file(&other).map_err(|e| PipelineError::io(&other, e))?;
    }
    let rel = target
        .strip_prefix(run_dir)
        .unwrap_or(&target)
        .to_string_lossy()
        .replace('\\', "/");
    Ok(FileEntry {
        path: rel,
        sha256: sha256_hex(&content),
        bytes: content.len() as u64,
    })
}

pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub fn encode_jsonl<T: Serialize>(header: &ArtifactHeader, records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, header).expect("header serializes");
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(
    run_dir: &Path,
    name: &str,
    header: &ArtifactHeader,
    records: &[T],
    gzip_threshold: u64,
) -> Result<FileEntry, PipelineError> {
    write_bytes(run_dir, name, &encode_jsonl(header, records), gzip_threshold)
}

/// Finds `name` or `name.gz` under the run directory.
pub fn locate(run_dir: &Path, name: &str) -> Option<PathBuf> {
    let plain = run_dir.join(name);
    let gz = gz_path(&plain);
    if plain.exists() {
        Some(plain)
    } else if gz.exists() {
        Some(gz)
    } else {
        None
    }
}

pub fn read_raw(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::io(path, e))
}

fn decompressed(path: &Path, raw: Vec<u8>) -> Result<Vec<u8>, PipelineError> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| PipelineError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, expected: &str) -> Result<(ArtifactHeader, Vec<T>), PipelineError> {
    let bytes = decompressed(path, read_raw(path)?)?;
    let mut lines = BufReader::new(bytes.as_slice()).lines();
    let bad = |line: usize, m: String| PipelineError::Data(format!("{}:{line}: {m}", path.display()));
    let header_line = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))?
        .map_err(|e| PipelineError::io(path, e))?;
    let header: ArtifactHeader = serde_json::from_str(&header_line).map_err(|e| bad(1, e.to_string()))?;
    if header.artifact != expected {
        return Err(bad(
            1,
            format!("expected a {expected} artifact, found {}", header.artifact),
        ));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(bad(
            1,
            format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                header.schema_version
            ),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        records.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?);
    }
    Ok((header, records))
}

pub fn write_json<T: Serialize>(run_dir: &Path, name: &str, value: &T) -> Result<FileEntry, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_bytes(run_dir, name, &bytes, u64::MAX)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = read_raw(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

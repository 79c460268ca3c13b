//! JSON envelopes, config hashing and file output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The effective configuration as a JSON value with sorted keys.
pub fn config_value(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("RunConfig always serializes")
}

/// SHA-256 of the compact, key-sorted JSON form of the configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text = serde_json::to_string(&config_value(cfg)).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn sha256_file(path: &Path) -> Result<String, OutputError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `{schema_version, effective_config, seed, config_hash, results, files, timing}`.
///
/// Only `results` is expected to be reproducible bit for bit; `timing` is not.
pub fn envelope(cfg: &RunConfig, results: Value, files: &[(String, String)], elapsed: Duration) -> Value {
    let files: Vec<Value> = files
        .iter()
        .map(|(name, sha)| json!({ "name": name, "sha256": sha }))
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "effective_config": config_value(cfg),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "results": results,
        "files": files,
        "timing": { "wall_seconds": elapsed.as_secs_f64() },
    })
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| OutputError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes serializable rows under a fixed header; the header is written even
/// when there are no rows.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<(), OutputError> {
    let encode = |e: csv::Error| OutputError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(encode)?;
    w.write_record(header).map_err(encode)?;
    for r in rows {
        w.serialize(r).map_err(encode)?;
    }
    w.flush().map_err(io_err(path))
}

/// Serializes an `f64` that may be non-finite; JSON has no NaN, so those become
/// `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config_changes() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn csv_header_is_exact() {
        #[derive(Serialize)]
        struct Row {
            d: usize,
            x: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["d", "x"], &[Row { d: 3, x: 0.5 }]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "d,x\n3,0.5\n");
        write_csv::<Row>(&p, &["d", "x"], &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "d,x\n");
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(nums(&[1.0, f64::INFINITY]), json!([1.0, null]));
    }
}

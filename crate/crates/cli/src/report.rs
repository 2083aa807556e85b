use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, format!("cannot read: {e}")))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

/// `{"file": ..., "sha256": ...}` records for a list of files. Only file
/// names are kept so reports do not depend on where the data lives.
pub fn digests<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<Value, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let mut m = Map::new();
        let name = p
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        m.insert("file".into(), Value::String(name));
        m.insert("sha256".into(), Value::String(sha256_file(p)?));
        out.push(Value::Object(m));
    }
    Ok(Value::Array(out))
}

/// Serializes `report` canonically, optionally stamping the current time,
/// and writes it to `out` or stdout.
pub fn emit(mut report: Value, timestamp: bool, out: Option<&Path>) -> Result<(), CliError> {
    if timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        if let Value::Object(m) = &mut report {
            m.insert("timestamp_unix".into(), Value::from(secs));
        }
    }
    let text = unicam_core::json::to_canonical_string(&report)?;
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Fails early when an output file's directory does not exist.
pub fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::input(path, "output directory does not exist"));
    }
    Ok(())
}

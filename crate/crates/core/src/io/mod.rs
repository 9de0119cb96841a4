//! Versioned JSON interchange files, run manifests, metric tables and
//! rendering.

mod eval;
mod render;
mod schema;

pub use eval::{summarize, write_runs_csv, write_summary_csv, RunRow, SummaryRow};
pub use render::{render_ascii, render_svg, Heatmap, HeatmapSet};
pub use schema::{
    ingest_external_demos, AccrualFile, ConstraintEntry, ConstraintsFile, DemoEntry, DemosFile, MdpFile, PolicyFile,
    ResultFile, TransitionEntry, WeightsFile, ACCRUAL_SCHEMA, CONSTRAINTS_SCHEMA, DEMOS_SCHEMA, MDP_SCHEMA,
    POLICY_SCHEMA, RESULT_SCHEMA, WEIGHTS_SCHEMA,
};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl IoError {
    pub fn schema(path: &Path, message: impl Into<String>) -> Self {
        IoError::Schema { path: path.display().to_string(), message: message.into() }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.display().to_string(), source }
    }
}

/// Provenance embedded in every output file.
///
/// Wall-clock time is recorded only on request so that reruns stay
/// byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub schemas: Vec<String>,
    /// SHA-256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, tool_version: &str) -> Self {
        Self { command: command.to_owned(), tool_version: tool_version.to_owned(), ..Self::default() }
    }

    pub fn input(mut self, role: &str, bytes: &[u8]) -> Self {
        self.inputs.insert(role.to_owned(), sha256_hex(bytes));
        self
    }

    pub fn schema(mut self, schema: &str) -> Self {
        self.schemas.push(schema.to_owned());
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).expect("parameter serializes");
        self.parameters.insert(key.to_owned(), value);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("schema types serialize");
    out.push(b'\n');
    out
}

/// Writes through a temporary file in the target directory, so a failed
/// write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, &to_json_bytes(value))
}

/// Files that carry a `schema` tag.
pub trait Versioned: DeserializeOwned {
    const SCHEMA: &'static str;
    fn schema_tag(&self) -> &str;
}

/// Parses `bytes` as `T`, checking its schema tag.
pub fn parse_json<T: Versioned>(path: &Path, bytes: &[u8]) -> Result<T, IoError> {
    let value: T = serde_json::from_slice(bytes).map_err(|e| IoError::schema(path, e.to_string()))?;
    if value.schema_tag() != T::SCHEMA {
        return Err(IoError::schema(path, format!("expected schema {:?}, found {:?}", T::SCHEMA, value.schema_tag())));
    }
    Ok(value)
}

/// Reads and parses a versioned file, returning its raw bytes for digests.
pub fn read_json<T: Versioned>(path: &Path) -> Result<(T, Vec<u8>), IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    let value = parse_json(path, &bytes)?;
    Ok((value, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_digest_is_sha256() {
        let m = RunManifest::new("infer", "0.1.0").input("mdp", b"abc");
        assert_eq!(m.inputs["mdp"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

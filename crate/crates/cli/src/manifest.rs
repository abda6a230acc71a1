use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use qaa_lns::delta::{table_to_json, DeltaTable};
use qaa_lns::format::TableFingerprint;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record written next to every output: enough to rerun the command and get
/// the same bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub tables: Vec<TableRecord>,
    /// Display form of the number format, when the run has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// `annealed`, `uniform`, `cross-bitwidth` or `exact`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_kind: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Serialize)]
pub struct TableRecord {
    pub role: String,
    pub fingerprint: TableFingerprint,
    /// SHA-256 of the table file contents.
    pub sha256: String,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl TableRecord {
    pub fn new(role: &str, table: &DeltaTable) -> Self {
        TableRecord {
            role: role.into(),
            fingerprint: table.fingerprint(),
            sha256: sha256_hex(table_to_json(table).as_bytes()),
        }
    }
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, started_unix: u64) -> Self {
        RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            version: format!("qaa-lns {}", env!("CARGO_PKG_VERSION")),
            config,
            seeds: BTreeMap::new(),
            tables: Vec::new(),
            format: None,
            table_kind: None,
            started_unix,
            finished_unix: 0,
        }
    }

    pub fn write(mut self, path: &Path) -> anyhow::Result<()> {
        self.finished_unix = unix_now();
        let mut s = serde_json::to_string_pretty(&self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

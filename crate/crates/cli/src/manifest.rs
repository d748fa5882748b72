use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cropmgmt::TaskMode;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub task: Option<TaskMode>,
    pub algo: Option<String>,
    pub seed: u64,
    pub seed_base: Option<u64>,
    /// Resolved configuration snapshot by section.
    pub config: BTreeMap<String, String>,
    /// `sha256("blob <len>\0" + snapshot)` over the canonical JSON of `config`.
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Git-style content hash.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn start(argv: &[String], subcommand: &str, seed: u64) -> Self {
        Self {
            schema_version: 1,
            command_line: argv.to_vec(),
            subcommand: subcommand.into(),
            task: None,
            algo: None,
            seed,
            seed_base: None,
            config: BTreeMap::new(),
            config_hash: String::new(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set_config(&mut self, section: &str, snapshot: String) {
        self.config.insert(section.into(), snapshot);
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let canonical = serde_json::to_vec(&self.config)?;
        self.config_hash = content_hash(&canonical);
        self.finished_at = now();
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_format() {
        // sha256 of "blob 0\0"
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}

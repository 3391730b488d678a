//! Output envelopes, provenance and file helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use treatfair::Result;

/// Version of the JSON document layout written by every command.
pub const REPORT_VERSION: &str = "1.0";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self { tool: "treatfair", version: env!("CARGO_PKG_VERSION"), command, seed, inputs: Vec::new() }
    }

    /// Records the digest of an input file. File names only, so outputs do
    /// not depend on where the inputs live.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs.push(InputDigest { role: role.into(), file, sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    spec_version: &'static str,
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes `body` with the version and provenance fields on top.
pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> Result<()> {
    let doc = Envelope { spec_version: REPORT_VERSION, provenance, body };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Provenance document next to a CSV output.
pub fn write_sidecar(csv_path: &Path, provenance: &Provenance) -> Result<()> {
    write_json(&sibling(csv_path, "provenance.json"), provenance, &serde_json::Map::new())
}

/// `dir/stem.<ext>` for an output path `dir/stem.*`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{ext}"))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

//! Run manifests: what ran, how it ended, and content hashes of every output.

use crate::error::{HmError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub status: String,
    /// Set when the run stopped before writing everything it intended to.
    pub partial: bool,
    pub config: toml::Table,
    #[serde(default)]
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| HmError::Io(e.error))?;
    Ok(())
}

impl Manifest {
    pub fn new(command: &str, config: toml::Table) -> Manifest {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            started: now_rfc3339(),
            finished: String::new(),
            status: "running".into(),
            partial: false,
            config,
            outputs: Vec::new(),
        }
    }

    /// Hashes `path` (inside `root`) and appends it to the output list.
    pub fn record(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let meta = std::fs::metadata(path)?;
        self.outputs.push(OutputFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: meta.len(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Stamps the end time and status, then writes atomically.
    pub fn finish(&mut self, status: &str, path: &Path) -> Result<()> {
        self.finished = now_rfc3339();
        self.status = status.to_string();
        write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| HmError::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyIssue {
    Missing(String),
    SizeMismatch { path: String, expected: u64, found: u64 },
    HashMismatch { path: String },
}

impl std::fmt::Display for VerifyIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyIssue::Missing(p) => write!(f, "{p}: missing"),
            VerifyIssue::SizeMismatch { path, expected, found } => {
                write!(f, "{path}: {found} bytes, manifest says {expected}")
            }
            VerifyIssue::HashMismatch { path } => write!(f, "{path}: sha256 mismatch"),
        }
    }
}

/// Recomputes every output hash listed in the manifest at `path`.
pub fn verify(path: &Path) -> Result<(Manifest, Vec<VerifyIssue>)> {
    let m = Manifest::load(path)?;
    let root: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut issues = Vec::new();
    for out in &m.outputs {
        let p = root.join(&out.path);
        let Ok(meta) = std::fs::metadata(&p) else {
            issues.push(VerifyIssue::Missing(out.path.clone()));
            continue;
        };
        if meta.len() != out.bytes {
            issues.push(VerifyIssue::SizeMismatch {
                path: out.path.clone(),
                expected: out.bytes,
                found: meta.len(),
            });
        } else if sha256_file(&p)? != out.sha256 {
            issues.push(VerifyIssue::HashMismatch { path: out.path.clone() });
        }
    }
    Ok((m, issues))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn write_verify_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "t,E\n0,1\n").unwrap();
        let mut m = Manifest::new("test", toml::Table::new());
        m.record(dir.path(), &f).unwrap();
        let mp = dir.path().join(MANIFEST_NAME);
        m.finish("ok", &mp).unwrap();
        let (back, issues) = verify(&mp).unwrap();
        assert!(issues.is_empty());
        assert_eq!(back.outputs[0].path, "a.csv");
        assert_eq!(back.status, "ok");
        std::fs::write(&f, "t,E\n0,2\n").unwrap();
        let (_, issues) = verify(&mp).unwrap();
        assert_eq!(issues, vec![VerifyIssue::HashMismatch { path: "a.csv".into() }]);
        std::fs::remove_file(&f).unwrap();
        let (_, issues) = verify(&mp).unwrap();
        assert_eq!(issues, vec![VerifyIssue::Missing("a.csv".into())]);
    }
}

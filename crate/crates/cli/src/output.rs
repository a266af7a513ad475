//! Error classes, atomic outputs with rollback, and run manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit 1.
    Usage(String),
    /// Unreadable, inconsistent or unplaceable data: exit 2.
    Data(String),
    /// Numeric breakdown such as a non-finite training loss: exit 3.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

pub fn data<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

/// Files written so far by one command; removed again unless committed.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
    committed: bool,
}

impl Outputs {
    /// Creates `dir` if needed; a directory created here is removed on rollback.
    pub fn in_dir(dir: &Path) -> Result<Self, CliError> {
        let mut out = Self::default();
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(data(format!("creating {}", dir.display())))?;
            out.created_dir = Some(dir.to_path_buf());
        }
        Ok(out)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        bubbleid::io::write_atomic(path, bytes).map_err(data(format!("writing {}", path.display())))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if let Some(d) = &self.created_dir {
            let _ = fs::remove_dir(d);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    /// SHA-256 of the effective config serialized as compact JSON.
    pub config_sha256: String,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub details: T,
}

impl<T: Serialize> Manifest<T> {
    pub fn new<C: Serialize>(command: &'static str, seed: Option<u64>, config: &C, details: T) -> Self {
        let value = serde_json::to_value(config).expect("serializable");
        Self {
            tool: "bubbleid",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256: sha256_hex(value.to_string().as_bytes()),
            config: value,
            details,
        }
    }
}

/// `<path>` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("new");
        {
            let mut out = Outputs::in_dir(&dir).unwrap();
            out.write(&dir.join("a.txt"), b"x").unwrap();
        }
        assert!(!dir.exists());
        let mut out = Outputs::in_dir(&dir).unwrap();
        out.write(&dir.join("a.txt"), b"x").unwrap();
        out.commit();
        assert!(dir.join("a.txt").exists());
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Collects artifacts in memory and writes them in one pass, each through
/// a temporary file renamed into place.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn add_with<F>(&mut self, name: String, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> triage_core::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: String, value: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn commit(self) -> Result<(), CliError> {
        if self.files.is_empty() {
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        for (name, bytes) in self.files {
            write_atomic(&self.dir.join(name), &bytes)?;
        }
        Ok(())
    }
}

pub fn write_atomic(dest: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match dest.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dest).map_err(|e| e.error)?;
    Ok(())
}

/// Product name made safe for use inside a file name.
pub fn file_stem(product: &str) -> String {
    product
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    lock.write_all(b"\n")?;
    Ok(())
}

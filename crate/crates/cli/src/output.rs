//! Run directories: append-only output files and the SHA-256 manifest.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ray_knight::verify::TestReport;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a Value,
    pub reports: Vec<(String, bool)>,
    pub pass: bool,
    pub files: Vec<FileEntry>,
}

/// A fresh directory under the output root. Files are created once and
/// never overwritten.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<String>,
    reports: Vec<(String, bool)>,
}

impl RunDir {
    /// `<root>/<stem>`, or `<root>/<stem>-2`, `-3`, … if taken.
    pub fn create(root: &Path, stem: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        for k in 1.. {
            let name = if k == 1 {
                stem.to_string()
            } else {
                format!("{stem}-{k}")
            };
            let path = root.join(name);
            match fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(RunDir {
                        path,
                        files: Vec::new(),
                        reports: Vec::new(),
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        unreachable!()
    }

    /// Creates `name` and hands a buffered writer to `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path.join(name);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn report(&mut self, r: &TestReport) -> Result<()> {
        let json = r.to_json();
        self.write(&format!("{}.json", r.name), |w| writeln!(w, "{json}"))?;
        self.reports.push((r.name.clone(), r.pass));
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|(_, p)| *p)
    }

    /// Hashes every file written so far into `manifest.json`.
    pub fn finish(mut self, command: &str, config: &Value) -> Result<PathBuf> {
        let mut entries = Vec::new();
        for name in &self.files {
            let path = self.path.join(name);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            entries.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            command,
            config,
            reports: self.reports.clone(),
            pass: self.all_pass(),
            files: entries,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        self.write("manifest.json", |w| writeln!(w, "{text}"))?;
        Ok(self.path)
    }
}

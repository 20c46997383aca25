//! Output directory handling: format filtering, atomic writes and the hash manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: usize,
}

pub struct Sink {
    dir: PathBuf,
    formats: BTreeSet<Format>,
    files: BTreeMap<String, FileEntry>,
    inputs: BTreeMap<String, FileEntry>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    inputs: &'a BTreeMap<String, FileEntry>,
    files: &'a BTreeMap<String, FileEntry>,
}

/// Formats a float for CSV: plain decimals in the usual range, exponent form outside it.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Sink {
    pub fn new(dir: &Path, formats: &[Format]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.iter().copied().collect(),
            files: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Records an input file in the manifest.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() });
    }

    /// Reads an input file and records it in the manifest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        self.input(path, &bytes);
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::io(&path, e));
        }
        self.files.insert(name.to_owned(), FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::numerical)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Written whatever the format filter says.
    pub fn always_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let bytes = Self::json_bytes(value)?;
        self.write(name, &bytes)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        self.always_json(name, value)
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(CliError::numerical)?;
        for row in rows {
            w.write_record(&row).map_err(CliError::numerical)?;
        }
        let bytes = w.into_inner().map_err(CliError::numerical)?;
        self.write(name, &bytes)
    }

    pub fn svg(&mut self, name: &str, doc: &str) -> Result<(), CliError> {
        if !self.wants(Format::Svg) {
            return Ok(());
        }
        self.write(name, doc.as_bytes())
    }

    /// Writes `manifest.json` listing every file produced so far.
    pub fn finish(mut self, subcommand: &str, seed: u64) -> Result<PathBuf, CliError> {
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            inputs: &self.inputs,
            files: &files,
        };
        let bytes = Self::json_bytes(&manifest)?;
        self.write("manifest.json", &bytes)?;
        Ok(self.dir.join("manifest.json"))
    }
}

//! Output directory handling: format selection, file writing, and the run manifest.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving report files and the manifest.
    #[arg(long, default_value = "swedge-out")]
    pub out: PathBuf,
    /// Report formats to write (repeatable or comma-separated); all three by default.
    #[arg(long = "format", value_enum, value_delimiter = ',')]
    pub formats: Vec<Format>,
    /// Also write plot-ready long-format CSV.
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_input(path: &Path) -> Result<(String, FileDigest)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    let digest = FileDigest { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) };
    Ok((text, digest))
}

/// Everything needed to rerun a command and check its outputs byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub struct RunOutput {
    dir: PathBuf,
    formats: Vec<Format>,
    pub plot_data: bool,
    written: Vec<FileDigest>,
}

impl RunOutput {
    pub fn create(args: &OutputArgs) -> Result<Self> {
        std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io { path: args.out.clone(), source })?;
        let formats = if args.formats.is_empty() { vec![Format::Text, Format::Csv, Format::Json] } else { args.formats.clone() };
        Ok(RunOutput { dir: args.out.clone(), formats, plot_data: args.plot_data, written: Vec::new() })
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(FileDigest { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Writes `stem.txt`, `stem.csv` and `stem.json` as selected by `--format`.
    pub fn write_report<T: Serialize + ?Sized>(&mut self, stem: &str, text: &str, csv: impl FnOnce() -> Result<Vec<u8>>, json: &T) -> Result<()> {
        if self.wants(Format::Text) {
            self.write(&format!("{stem}.txt"), text.as_bytes())?;
        }
        if self.wants(Format::Csv) {
            let bytes = csv()?;
            self.write(&format!("{stem}.csv"), &bytes)?;
        }
        if self.wants(Format::Json) {
            let bytes = to_json(json)?;
            self.write(&format!("{stem}.json"), &bytes)?;
        }
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.outputs = self.written;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, to_json(&manifest)?).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(swedge_core::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(swedge_core::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv buffer: {e}")))
}

pub fn manifest(command: &'static str, config: serde_json::Value, seed: Option<u64>, threads: Option<usize>, inputs: Vec<FileDigest>) -> Manifest {
    Manifest {
        tool: "swedge",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        config,
        seed,
        threads,
        inputs,
        outputs: Vec::new(),
    }
}

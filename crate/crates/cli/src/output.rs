use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

/// Where and how results are written.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub out: Option<PathBuf>,
    pub format: Format,
    pub timestamp: bool,
}

/// Common header of every JSON artifact.
#[derive(Debug, Clone)]
pub struct Header<'a> {
    pub command: &'a str,
    pub model_hash: &'a str,
    pub model_kind: &'a str,
    pub seed: u64,
}

/// One computed artifact: the JSON result and optional CSV sidecars.
#[derive(Debug, Clone, Default)]
pub struct Artifact {
    pub result: Value,
    pub csv: Vec<(String, String)>,
}

impl Emitter {
    pub fn envelope(&self, h: &Header, result: Value) -> Value {
        let mut doc = json!({
            "tool": "semistable-lab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": h.command,
            "model_hash": h.model_hash,
            "model_kind": h.model_kind,
            "seed": h.seed,
            "result": result,
        });
        if self.timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            doc["unix_time"] = json!(secs);
        }
        doc
    }

    pub fn emit(&self, h: &Header, art: Artifact) -> Result<(), CliError> {
        let doc = self.envelope(h, art.result);
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        let want_json = matches!(self.format, Format::Json | Format::Both) || art.csv.is_empty();
        let want_csv = matches!(self.format, Format::Csv | Format::Both);
        match &self.out {
            None => {
                let mut stdout = std::io::stdout().lock();
                let io = |e: std::io::Error| CliError::Io(e.to_string());
                if want_json {
                    stdout.write_all(text.as_bytes()).map_err(io)?;
                }
                if want_csv {
                    for (_, body) in &art.csv {
                        stdout.write_all(body.as_bytes()).map_err(io)?;
                    }
                }
            }
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                if want_json {
                    write_atomic(&dir.join(format!("{}.json", h.command)), text.as_bytes())?;
                }
                if want_csv {
                    for (name, body) in &art.csv {
                        write_atomic(&dir.join(format!("{}_{name}.csv", h.command)), body.as_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Write through a temporary file in the same directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(err)?;
        f.write_all(bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
    }
    std::fs::rename(&tmp, path).map_err(err)
}

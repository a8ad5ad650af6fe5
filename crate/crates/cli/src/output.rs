//! CSV writers and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<PathBuf>, parameters: BTreeMap<String, serde_json::Value>) -> Self {
        Self {
            command: command.into(),
            config,
            parameters,
            outputs: Vec::new(),
            version: VERSION.into(),
            seed: None,
            rng: None,
            duration_seconds: 0.0,
        }
    }

    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.manifest.json", self.command))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = self.path_in(dir);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Writes serializable rows under a `# exolimits <version> seed=<seed>`
/// comment line and a header row.
pub fn write_csv<T: Serialize>(path: &Path, seed: Option<u64>, rows: &[T]) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    writeln!(f, "# exolimits {VERSION} seed={seed}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Header plus string rows, for tables whose columns are only known at run time.
pub fn write_csv_records(path: &Path, seed: Option<u64>, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    writeln!(f, "# exolimits {VERSION} seed={seed}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of `run_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    /// `ok` or `error`.
    pub status: String,
    pub duration_s: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only JSON-lines log of the stages run in one directory.
#[derive(Debug, Clone)]
pub struct RunLog {
    path: PathBuf,
}

pub const RUN_LOG: &str = "run_log.jsonl";

impl RunLog {
    pub fn in_dir(dir: &Path) -> Self {
        RunLog {
            path: dir.join(RUN_LOG),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LogEntry) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let line = serde_json::to_string(entry).map_err(|e| Error::json(&self.path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    /// Runs `f` as `stage`, logging its outcome and duration. Warnings pushed
    /// into the provided vector are logged with the entry.
    pub fn stage<T>(&self, stage: &str, f: impl FnOnce(&mut Vec<String>) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let mut warnings = Vec::new();
        let out = f(&mut warnings).map_err(|e| Error::in_stage(stage, e));
        let entry = LogEntry {
            stage: stage.to_string(),
            status: if out.is_ok() { "ok" } else { "error" }.to_string(),
            duration_s: start.elapsed().as_secs_f64(),
            warnings,
            error: out.as_ref().err().map(|e| e.to_string()),
        };
        self.append(&entry)?;
        out
    }

    pub fn read(&self) -> Result<Vec<LogEntry>> {
        let text = std::fs::read_to_string(&self.path).map_err(|e| Error::io(&self.path, e))?;
        text.lines()
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(&self.path, e)))
            .collect()
    }
}

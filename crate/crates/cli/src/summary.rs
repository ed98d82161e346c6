use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseNote {
    pub case_id: String,
    pub reason: String,
}

/// Machine-readable record of one command run, written as
/// `run_summary.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub task: String,
    pub config_hash: String,
    pub seed: u64,
    pub manifest_sha256: Option<String>,
    pub processed: Vec<String>,
    pub skipped: Vec<CaseNote>,
    pub failed: Vec<CaseNote>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunSummary {
    pub fn new(command: &str, task: &str, config_hash: String, seed: u64) -> Self {
        RunSummary {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            task: task.to_string(),
            config_hash,
            seed,
            manifest_sha256: None,
            processed: Vec::new(),
            skipped: Vec::new(),
            failed: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn skip(&mut self, case_id: &str, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("case {case_id} skipped: {reason}");
        self.skipped.push(CaseNote {
            case_id: case_id.to_string(),
            reason,
        });
    }

    pub fn fail(&mut self, case_id: &str, reason: impl Into<String>) {
        let reason = reason.into();
        log::error!("case {case_id} failed: {reason}");
        self.failed.push(CaseNote {
            case_id: case_id.to_string(),
            reason,
        });
    }

    pub fn output(&mut self, rel: impl Into<String>) {
        self.outputs.push(rel.into());
    }

    pub fn write(&mut self, out_dir: &Path) -> CliResult<()> {
        self.processed.sort();
        self.skipped.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        self.failed.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        self.outputs.sort();
        self.outputs.dedup();
        let path = out_dir.join("run_summary.json");
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))
    }
}

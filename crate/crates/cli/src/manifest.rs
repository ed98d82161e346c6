//! Case manifests: a JSON list of cases and the files belonging to each.
//!
//! ```json
//! {
//!   "task": "met",
//!   "cases": [
//!     {
//!       "id": "case-001",
//!       "sequences": { "t1": "img/case-001_t1.nii.gz", "t1ce": "...", "t2": "...", "flair": "..." },
//!       "models": { "nnunet": "probs/nnunet", "mednext": "probs/mednext" },
//!       "prediction": "cv/case-001.nii.gz",
//!       "ground_truth": "gt/case-001.nii.gz",
//!       "fold": 0
//!     }
//!   ]
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory. A model
//! entry names a directory holding `<case>_<channel>.nii.gz` files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subseg::config::TaskConfig;
use subseg::fusion::ProbabilityStack;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub id: String,
    #[serde(default)]
    pub sequences: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub models: BTreeMap<String, PathBuf>,
    /// Label map predicted for the case (e.g. cross-validated ensemble output).
    #[serde(default)]
    pub prediction: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: String,
    pub cases: Vec<CaseEntry>,
    #[serde(skip)]
    digest: String,
}

/// Inputs a command reads for every case.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub sequences: bool,
    pub models: bool,
    pub prediction: bool,
    pub ground_truth: bool,
}

impl Manifest {
    /// Parse, resolve relative paths and check case ids. Cases come back
    /// sorted by id.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::validation(format!("manifest {}: {e}", path.display())))?;
        m.digest = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let mut seen = BTreeSet::new();
        for c in &mut m.cases {
            if c.id.is_empty() || c.id.contains(['/', '\\']) {
                return Err(CliError::validation(format!("invalid case id {:?}", c.id)));
            }
            if !seen.insert(c.id.clone()) {
                return Err(CliError::validation(format!("duplicate case id {}", c.id)));
            }
            c.sequences.values_mut().for_each(resolve);
            c.models.values_mut().for_each(resolve);
            c.prediction.iter_mut().for_each(resolve);
            c.ground_truth.iter_mut().for_each(resolve);
        }
        m.cases.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(m)
    }

    /// Hex SHA-256 of the manifest file bytes.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Every problem found per case: missing required inputs and referenced
    /// files that do not exist.
    pub fn problems(&self, cfg: &TaskConfig, needs: Needs) -> Vec<(String, String)> {
        let channels = cfg.channel_names();
        let active: Vec<&str> = cfg
            .ensemble
            .models()
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(n, _)| n.as_str())
            .collect();
        let mut out = Vec::new();
        for c in &self.cases {
            let mut report = |msg: String| out.push((c.id.clone(), msg));
            let exists = |p: &Path| p.exists();
            for (name, p) in &c.sequences {
                if !exists(p) {
                    report(format!("sequence {name}: {} does not exist", p.display()));
                }
            }
            for (name, dir) in &c.models {
                for ch in &channels {
                    let f = ProbabilityStack::channel_path(dir, &c.id, ch);
                    if !exists(&f) {
                        report(format!("model {name}: {} does not exist", f.display()));
                    }
                }
            }
            for (what, p) in [("prediction", &c.prediction), ("ground truth", &c.ground_truth)] {
                if let Some(p) = p {
                    if !exists(p) {
                        report(format!("{what}: {} does not exist", p.display()));
                    }
                }
            }
            if needs.sequences {
                for s in &cfg.sequences {
                    if !c.sequences.contains_key(s) {
                        report(format!("sequence {s} is missing"));
                    }
                }
            }
            if needs.models {
                for m in &active {
                    if !c.models.contains_key(*m) {
                        report(format!("probabilities of model {m} are missing"));
                    }
                }
            }
            if needs.prediction && c.prediction.is_none() {
                report("prediction is missing".into());
            }
            if needs.ground_truth && c.ground_truth.is_none() {
                report("ground truth is missing".into());
            }
        }
        out
    }
}

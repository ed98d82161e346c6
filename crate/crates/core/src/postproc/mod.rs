//! Two-stage, subtype-adaptive cleanup of predicted label maps.
//!
//! Stage one erases connected components of a label that are smaller than a
//! per-(subtype, label) volume threshold. Stage two rewrites a label to
//! another one when its share of the whole tumor falls below a ratio.

mod fit;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use fit::{fit_policy, fit_stage1, fit_stage2, write_fit_report, FitCase, FitRecord, PostprocGrid};

use crate::error::{Error, Result};
use crate::metrics::RegionSpec;
use crate::morphology::{remove_small_in_place, Connectivity};
use crate::volume::{Alphabet, LabelVolume};

pub const POLICY_FORMAT: &str = "subseg-threshold-policy";
pub const POLICY_VERSION: u32 = 1;

/// Passes of the rule set allowed before giving up on a fixed point.
const MAX_PASSES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovalRule {
    pub cluster: usize,
    pub label: u8,
    pub min_volume_mm3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelabelRule {
    pub cluster: usize,
    pub label: u8,
    /// The rule fires when `count(label) / count(foreground) < ratio`.
    pub ratio: f64,
    /// Replacement label; 0 erases the voxels.
    pub target: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub format: String,
    pub version: u32,
    pub task: String,
    pub alphabet: Alphabet,
    pub region_spec_hash: String,
    pub connectivity: Connectivity,
    pub clusters: usize,
    /// Free-form description of the data the policy was fitted on.
    pub provenance: String,
    pub stage1: Vec<RemovalRule>,
    pub stage2: Vec<RelabelRule>,
}

impl ThresholdPolicy {
    /// A policy with no rules.
    pub fn empty(spec: &RegionSpec, clusters: usize, connectivity: Connectivity) -> Self {
        ThresholdPolicy {
            format: POLICY_FORMAT.to_string(),
            version: POLICY_VERSION,
            task: spec.task.clone(),
            alphabet: spec.alphabet.clone(),
            region_spec_hash: spec.hash(),
            connectivity,
            clusters,
            provenance: String::new(),
            stage1: Vec::new(),
            stage2: Vec::new(),
        }
    }

    /// Checks rule references, ranges, uniqueness and that no cluster's
    /// relabel rules form a cycle.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("policy: {msg}")));
        let mut seen = BTreeMap::new();
        for r in &self.stage1 {
            if r.cluster >= self.clusters {
                return bad(format!("removal rule for unknown cluster {}", r.cluster));
            }
            if r.label == 0 || !self.alphabet.contains(r.label) {
                return bad(format!("removal rule for unknown label {}", r.label));
            }
            if !(r.min_volume_mm3.is_finite() && r.min_volume_mm3 >= 0.0) {
                return bad(format!("invalid volume threshold {}", r.min_volume_mm3));
            }
            if seen.insert((r.cluster, r.label), ()).is_some() {
                return bad(format!("duplicate removal rule ({}, {})", r.cluster, r.label));
            }
        }
        for r in &self.stage2 {
            if r.cluster >= self.clusters {
                return bad(format!("relabel rule for unknown cluster {}", r.cluster));
            }
            if r.label == 0 || !self.alphabet.contains(r.label) || !self.alphabet.contains(r.target) {
                return bad(format!("relabel rule {} -> {} uses an unknown label", r.label, r.target));
            }
            if r.label == r.target {
                return bad(format!("relabel rule maps label {} onto itself", r.label));
            }
            if !(0.0..=1.0).contains(&r.ratio) {
                return bad(format!("ratio {} outside [0, 1]", r.ratio));
            }
        }
        for c in 0..self.clusters {
            let edges: Vec<(u8, u8)> = self
                .stage2
                .iter()
                .filter(|r| r.cluster == c)
                .map(|r| (r.label, r.target))
                .collect();
            for &(start, _) in &edges {
                let mut cur = start;
                for _ in 0..=edges.len() {
                    match edges.iter().find(|(s, _)| *s == cur) {
                        Some(&(_, t)) if t == start => {
                            return bad(format!("relabel rules of cluster {c} form a cycle through label {start}"))
                        }
                        Some(&(_, t)) => cur = t,
                        None => break,
                    }
                }
            }
        }
        Ok(())
    }

    /// Confirms the policy was fitted for this task's labels and regions.
    pub fn check_task(&self, spec: &RegionSpec) -> Result<()> {
        if self.alphabet != spec.alphabet {
            return Err(Error::Schema(format!(
                "policy labels do not match task {} (policy task {})",
                spec.task, self.task
            )));
        }
        if self.region_spec_hash != spec.hash() {
            return Err(Error::Schema(format!("policy regions do not match task {}", spec.task)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if raw.get("format").and_then(|f| f.as_str()) != Some(POLICY_FORMAT) {
            return Err(corrupt("not a threshold policy".into()));
        }
        let found = raw.get("version").and_then(|v| v.as_u64());
        if found != Some(POLICY_VERSION as u64) {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: found.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: POLICY_VERSION.to_string(),
            });
        }
        let policy: ThresholdPolicy = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
        policy.validate()?;
        Ok(policy)
    }
}

/// Voxel count of `label` over the foreground count; 0 for an empty map.
pub(crate) fn wt_ratio(data: &[u8], label: u8) -> f64 {
    let (mut n, mut wt) = (0usize, 0usize);
    for &v in data {
        n += (v == label) as usize;
        wt += (v != 0) as usize;
    }
    if wt == 0 {
        0.0
    } else {
        n as f64 / wt as f64
    }
}

pub(crate) fn relabel_in_place(data: &mut [u8], rule: &RelabelRule) -> bool {
    if wt_ratio(data, rule.label) >= rule.ratio {
        return false;
    }
    let mut changed = false;
    for v in data.iter_mut().filter(|v| **v == rule.label) {
        *v = rule.target;
        changed = true;
    }
    changed
}

fn one_pass(labels: &LabelVolume, data: &mut [u8], cluster: usize, policy: &ThresholdPolicy) -> bool {
    let mut stage1: Vec<&RemovalRule> = policy.stage1.iter().filter(|r| r.cluster == cluster).collect();
    stage1.sort_by_key(|r| r.label);
    let mut changed = false;
    for r in stage1 {
        changed |= remove_small_in_place(labels.geometry(), data, r.label, r.min_volume_mm3, policy.connectivity);
    }
    for r in policy.stage2.iter().filter(|r| r.cluster == cluster) {
        changed |= relabel_in_place(data, r);
    }
    changed
}

/// Apply the rules of `cluster`: removals in ascending label order, then the
/// relabel rules in stored order, repeated until nothing changes.
pub fn apply_policy(labels: &LabelVolume, cluster: usize, policy: &ThresholdPolicy) -> Result<LabelVolume> {
    if labels.alphabet() != &policy.alphabet {
        return Err(Error::Schema(format!("label map alphabet differs from policy task {}", policy.task)));
    }
    if cluster >= policy.clusters {
        log::warn!(
            "cluster {cluster} is not covered by the policy ({} clusters); leaving labels unchanged",
            policy.clusters
        );
        return Ok(labels.clone());
    }
    let mut data = labels.data().to_vec();
    let mut passes = 0;
    while one_pass(labels, &mut data, cluster, policy) {
        passes += 1;
        if passes >= MAX_PASSES {
            log::warn!("post-processing did not settle after {MAX_PASSES} passes");
            break;
        }
    }
    labels.with_data(data)
}

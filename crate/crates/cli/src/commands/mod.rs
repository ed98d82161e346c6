//! Subcommand implementations and the helpers they share.

mod cluster;
mod ensemble;
mod evaluate;
mod features;
mod folds;
mod pipeline;
mod postproc;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use subseg::config::TaskConfig;
use subseg::fusion::{argmax_labels, fuse, EnsembleWeights, ProbabilityStack};
use subseg::radiomics::{extract_case_features, FeatureVector};
use subseg::volume::{read_labels, read_volume, write_labels, LabelVolume, Mask};

pub use cluster::cluster_fit;
pub use ensemble::ensemble;
pub use evaluate::evaluate;
pub use features::features;
pub use folds::folds;
pub use pipeline::{pipeline, PipelineArgs};
pub use postproc::{postproc_apply, postproc_fit};

use crate::error::{CliError, CliResult};
use crate::manifest::{CaseEntry, Manifest, Needs};
use crate::summary::RunSummary;

/// Where the whole-tumor mask used for features comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WtSource {
    /// Foreground of the ground-truth label map.
    Gt,
    /// Foreground of the predicted label map.
    Prediction,
}

/// A preset name or config file; without one, the manifest's task preset.
pub fn load_config(config: Option<&str>, manifest: Option<&Manifest>, seed: Option<u64>) -> CliResult<TaskConfig> {
    let mut cfg = match (config, manifest) {
        (Some(c), _) => TaskConfig::resolve(c)?,
        (None, Some(m)) => TaskConfig::preset(&m.task).ok_or_else(|| {
            CliError::validation(format!("task {:?} has no preset; pass --config", m.task))
        })?,
        (None, None) => return Err(CliError::validation("--config is required")),
    };
    if let Some(m) = manifest {
        if m.task != cfg.task && m.task != "custom" {
            return Err(CliError::validation(format!(
                "manifest task {} does not match config task {}",
                m.task, cfg.task
            )));
        }
    }
    if let Some(s) = seed {
        cfg.subtype.seed = s;
    }
    Ok(cfg)
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Processing(format!("cannot create {}: {e}", dir.display())))
}

/// Cases whose inputs are complete. In strict mode any problem aborts the
/// run before processing starts; otherwise the affected cases are skipped.
pub fn usable_cases<'m>(
    manifest: &'m Manifest,
    cfg: &TaskConfig,
    needs: Needs,
    strict: bool,
    summary: &mut RunSummary,
) -> CliResult<Vec<&'m CaseEntry>> {
    let problems = manifest.problems(cfg, needs);
    if strict && !problems.is_empty() {
        let lines: Vec<String> = problems.iter().map(|(c, m)| format!("{c}: {m}")).collect();
        return Err(CliError::validation(lines.join("; ")));
    }
    let mut bad: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (c, m) in &problems {
        bad.entry(c.as_str()).or_default().push(m.as_str());
    }
    for (c, msgs) in &bad {
        summary.skip(c, msgs.join("; "));
    }
    Ok(manifest.cases.iter().filter(|c| !bad.contains_key(c.id.as_str())).collect())
}

/// Runs `f` on every case in parallel; results keep the input order.
pub fn per_case<T: Send>(
    cases: &[&CaseEntry],
    f: impl Fn(&CaseEntry) -> subseg::Result<T> + Sync,
) -> Vec<(String, subseg::Result<T>)> {
    cases.par_iter().map(|c| (c.id.clone(), f(c))).collect()
}

/// Splits per-case results into successes and recorded failures.
pub fn collect_ok<T>(results: Vec<(String, subseg::Result<T>)>, summary: &mut RunSummary) -> Vec<(String, T)> {
    let mut ok = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => summary.fail(&id, e.to_string()),
        }
    }
    ok
}

/// Writes the run summary, then turns per-case failures into an error when
/// running strictly.
pub fn finish(mut summary: RunSummary, out: &Path, strict: bool) -> CliResult<()> {
    summary.write(out)?;
    if strict && !summary.failed.is_empty() {
        return Err(CliError::Processing(format!("{} case(s) failed", summary.failed.len())));
    }
    Ok(())
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn read_case_labels(path: &Path, cfg: &TaskConfig) -> subseg::Result<LabelVolume> {
    read_labels(path, &cfg.alphabet)
}

pub fn wt_path(case: &CaseEntry, source: WtSource) -> Option<&PathBuf> {
    match source {
        WtSource::Gt => case.ground_truth.as_ref(),
        WtSource::Prediction => case.prediction.as_ref(),
    }
}

/// Outcome of feature extraction for one case.
pub enum CaseFeatures {
    Extracted(FeatureVector),
    EmptyWt,
}

pub fn case_features(case: &CaseEntry, cfg: &TaskConfig, wt: &Mask) -> subseg::Result<CaseFeatures> {
    let mut volumes = Vec::with_capacity(cfg.sequences.len());
    for s in &cfg.sequences {
        let path = case
            .sequences
            .get(s)
            .ok_or_else(|| subseg::Error::invalid(format!("sequence {s} is missing")))?;
        volumes.push((s.clone(), read_volume(path)?));
    }
    let refs: Vec<(String, &subseg::volume::Volume)> = volumes.iter().map(|(n, v)| (n.clone(), v)).collect();
    match extract_case_features(&case.id, &refs, wt, &cfg.feature_config()) {
        Ok(fv) => Ok(CaseFeatures::Extracted(fv)),
        Err(subseg::Error::EmptyRoi { .. }) => Ok(CaseFeatures::EmptyWt),
        Err(e) => Err(e),
    }
}

/// Models with positive weight; zero-weight members need no input files.
pub fn active_weights(cfg: &TaskConfig) -> subseg::Result<EnsembleWeights> {
    EnsembleWeights::new(cfg.ensemble.models().iter().filter(|(_, w)| *w > 0.0).cloned().collect())
}

pub fn ensemble_case(case: &CaseEntry, cfg: &TaskConfig, weights: &EnsembleWeights) -> subseg::Result<LabelVolume> {
    let channels = cfg.channel_names();
    let mut stacks = Vec::with_capacity(weights.len());
    for name in weights.names() {
        let dir = case
            .models
            .get(name)
            .ok_or_else(|| subseg::Error::invalid(format!("probabilities of model {name} are missing")))?;
        stacks.push(ProbabilityStack::read(dir, &case.id, &channels)?);
    }
    let fused = fuse(&stacks, weights)?;
    argmax_labels(&fused, &cfg.alphabet)
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated artifact behind.
pub fn write_labels_atomic(labels: &LabelVolume, path: &Path) -> subseg::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out.nii.gz");
    let tmp = path.with_file_name(format!(".partial-{name}"));
    write_labels(labels, &tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| subseg::Error::io(path, e))
}

pub fn labels_path(dir: &Path, case_id: &str) -> PathBuf {
    dir.join(format!("{case_id}.nii.gz"))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Processing(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))
}

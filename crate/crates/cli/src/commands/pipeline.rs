use std::path::Path;

use serde::Serialize;
use subseg::metrics::{evaluate_case, CaseReport};
use subseg::postproc::apply_policy;

use super::evaluate::write_reports;
use super::features::{write_table, FeatureTable};
use super::postproc::{case_cluster, cluster_rows, load_model, load_policy};
use super::*;

pub struct PipelineArgs<'a> {
    pub manifest: &'a Manifest,
    pub cfg: &'a TaskConfig,
    pub model: &'a Path,
    pub policy: &'a Path,
    pub wt_source: WtSource,
    pub out: &'a Path,
    pub strict: bool,
    pub resume: bool,
}

/// Identity of the inputs a run was started with; a resumed run must match.
#[derive(Debug, PartialEq, Serialize, serde::Deserialize)]
struct RunInputs {
    manifest_sha256: String,
    config_hash: String,
    model_sha256: String,
    policy_sha256: String,
    wt_source: String,
}

struct CaseOutcome {
    features: Option<FeatureVector>,
    cluster: Option<usize>,
    report: Option<CaseReport>,
}

fn load_or<F>(path: &Path, resume: bool, cfg: &TaskConfig, make: F) -> subseg::Result<LabelVolume>
where
    F: FnOnce() -> subseg::Result<LabelVolume>,
{
    if resume && path.exists() {
        log::debug!("reusing {}", path.display());
        return read_case_labels(path, cfg);
    }
    let labels = make()?;
    write_labels_atomic(&labels, path)?;
    Ok(labels)
}

/// Ensemble, subtype assignment from the WT features, post-processing and,
/// when ground truth is present, evaluation.
pub fn pipeline(args: PipelineArgs<'_>) -> CliResult<()> {
    let PipelineArgs {
        manifest,
        cfg,
        out,
        strict,
        resume,
        ..
    } = args;
    let ens_dir = out.join("ensemble");
    let final_dir = out.join("final");
    create_dir(&ens_dir)?;
    create_dir(&final_dir)?;
    let mut summary = RunSummary::new("pipeline", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());

    let model = load_model(args.model, cfg)?;
    let policy = load_policy(args.policy, cfg, &model)?;
    let inputs = RunInputs {
        manifest_sha256: manifest.digest().to_string(),
        config_hash: cfg.hash(),
        model_sha256: file_sha256(args.model)?,
        policy_sha256: file_sha256(args.policy)?,
        wt_source: format!("{:?}", args.wt_source).to_lowercase(),
    };
    let inputs_path = out.join("run_inputs.json");
    if resume && inputs_path.exists() {
        let text = std::fs::read_to_string(&inputs_path)
            .map_err(|e| CliError::validation(format!("{}: {e}", inputs_path.display())))?;
        let previous: RunInputs = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", inputs_path.display())))?;
        if previous != inputs {
            return Err(CliError::validation(
                "cannot resume: manifest, config, model, policy or WT source changed since the interrupted run",
            ));
        }
    }
    let mut text = serde_json::to_string_pretty(&inputs).expect("inputs serialize");
    text.push('\n');
    std::fs::write(&inputs_path, text).map_err(|e| CliError::Processing(format!("{}: {e}", inputs_path.display())))?;
    summary.output("run_inputs.json");

    let needs = Needs {
        sequences: true,
        models: true,
        ground_truth: args.wt_source == WtSource::Gt,
        ..Needs::default()
    };
    let cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    let weights = active_weights(cfg)?;
    let spec = cfg.region_spec();

    let results = per_case(&cases, |c| {
        let predicted = load_or(&labels_path(&ens_dir, &c.id), resume, cfg, || ensemble_case(c, cfg, &weights))?;
        let gt = match &c.ground_truth {
            Some(p) => Some(read_case_labels(p, cfg)?),
            None => None,
        };
        let wt_labels = match args.wt_source {
            WtSource::Prediction => &predicted,
            WtSource::Gt => gt.as_ref().expect("checked"),
        };
        let (features, cluster) = case_cluster(c, cfg, &model, wt_labels)?;
        let final_labels = load_or(&labels_path(&final_dir, &c.id), resume, cfg, || match cluster {
            Some(k) => apply_policy(&predicted, k, &policy),
            None => {
                log::warn!("case {}: empty whole tumor, labels left unchanged", c.id);
                Ok(predicted.clone())
            }
        })?;
        let report = match &gt {
            Some(gt) => Some(evaluate_case(&c.id, &final_labels, gt, &spec, &cfg.metrics)?),
            None => None,
        };
        Ok(CaseOutcome {
            features,
            cluster,
            report,
        })
    });

    let mut table = FeatureTable {
        rows: Vec::new(),
        empty_wt: Vec::new(),
    };
    let mut assigned = Vec::new();
    let mut reports = Vec::new();
    for (id, o) in collect_ok(results, &mut summary) {
        match o.features {
            Some(fv) => table.rows.push((id.clone(), fv)),
            None => table.empty_wt.push(id.clone()),
        }
        assigned.push((id.clone(), o.cluster));
        reports.extend(o.report);
        summary.output(format!("ensemble/{id}.nii.gz"));
        summary.output(format!("final/{id}.nii.gz"));
    }
    write_table(out, cfg, &table, &mut summary)?;
    summary.processed = assigned.iter().map(|(id, _)| id.clone()).collect();
    write_csv(&out.join("clusters.csv"), &["case_id", "cluster"], &cluster_rows(&assigned))?;
    summary.output("clusters.csv");
    if !reports.is_empty() {
        write_reports(out, &reports, &mut summary)?;
    }
    finish(summary, out, strict)
}

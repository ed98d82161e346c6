use std::path::Path;

use subseg::postproc::{apply_policy, fit_policy, write_fit_report, FitCase, ThresholdPolicy};
use subseg::radiomics::feature_names;
use subseg::subtype::{assign_subtype, SubtypeModel};

use super::*;

pub(super) fn load_model(path: &Path, cfg: &TaskConfig) -> CliResult<SubtypeModel> {
    let model = SubtypeModel::load(path)?;
    if model.feature_names != feature_names(&cfg.sequences) {
        return Err(CliError::validation(format!(
            "{}: model features do not match the configured sequences",
            path.display()
        )));
    }
    Ok(model)
}

pub(super) fn load_policy(path: &Path, cfg: &TaskConfig, model: &SubtypeModel) -> CliResult<ThresholdPolicy> {
    let policy = ThresholdPolicy::load(path)?;
    policy.check_task(&cfg.region_spec())?;
    if policy.clusters != model.k {
        log::warn!(
            "policy covers {} clusters but the subtype model has {}; uncovered clusters are left unchanged",
            policy.clusters,
            model.k
        );
    }
    Ok(policy)
}

/// Subtype of a case from the features of `labels`' whole tumor; `None`
/// when the whole tumor is empty.
pub(super) fn case_cluster(
    case: &CaseEntry,
    cfg: &TaskConfig,
    model: &SubtypeModel,
    labels: &LabelVolume,
) -> subseg::Result<(Option<FeatureVector>, Option<usize>)> {
    match case_features(case, cfg, &labels.foreground())? {
        CaseFeatures::Extracted(fv) => {
            let cluster = assign_subtype(model, &fv)?;
            Ok((Some(fv), Some(cluster)))
        }
        CaseFeatures::EmptyWt => Ok((None, None)),
    }
}

pub(super) fn cluster_rows(assigned: &[(String, Option<usize>)]) -> Vec<Vec<String>> {
    assigned
        .iter()
        .map(|(id, c)| vec![id.clone(), c.map(|c| c.to_string()).unwrap_or_default()])
        .collect()
}

pub fn postproc_fit(manifest: &Manifest, cfg: &TaskConfig, model_path: &Path, out: &Path, strict: bool) -> CliResult<()> {
    create_dir(out)?;
    let mut summary = RunSummary::new("postproc-fit", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());
    let model = load_model(model_path, cfg)?;
    let needs = Needs {
        sequences: true,
        prediction: true,
        ..Needs::default()
    };
    let mut cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    cases.retain(|c| {
        if c.ground_truth.is_none() {
            summary.skip(&c.id, "no ground truth");
        }
        c.ground_truth.is_some()
    });
    let results = per_case(&cases, |c| {
        let prediction = read_case_labels(c.prediction.as_ref().expect("checked"), cfg)?;
        let ground_truth = read_case_labels(c.ground_truth.as_ref().expect("checked"), cfg)?;
        prediction
            .geometry()
            .ensure_aligned(ground_truth.geometry(), &format!("case {}: prediction vs ground truth", c.id))?;
        let (_, cluster) = case_cluster(c, cfg, &model, &prediction)?;
        Ok((prediction, ground_truth, cluster))
    });
    let mut fit_cases = Vec::new();
    let mut assigned = Vec::new();
    for (id, (prediction, ground_truth, cluster)) in collect_ok(results, &mut summary) {
        assigned.push((id.clone(), cluster));
        match cluster {
            Some(cluster) => fit_cases.push(FitCase {
                case_id: id,
                prediction,
                ground_truth,
                cluster,
            }),
            None => summary.skip(&id, "empty predicted whole tumor"),
        }
    }
    if fit_cases.is_empty() {
        summary.write(out)?;
        return Err(CliError::Processing("no usable case to fit the policy on".into()));
    }
    let provenance = format!("{} cases; manifest sha256 {}", fit_cases.len(), manifest.digest());
    let (policy, records) = fit_policy(&fit_cases, model.k, &cfg.postproc, &cfg.region_spec(), &cfg.metrics, &provenance)?;
    log::info!(
        "policy: {} removal and {} relabel rules over {} clusters",
        policy.stage1.len(),
        policy.stage2.len(),
        policy.clusters
    );
    policy.save(out.join("policy.json"))?;
    write_fit_report(out.join("postproc_fit.csv"), &records)?;
    write_csv(&out.join("clusters.csv"), &["case_id", "cluster"], &cluster_rows(&assigned))?;
    summary.processed = fit_cases.iter().map(|c| c.case_id.clone()).collect();
    for f in ["policy.json", "postproc_fit.csv", "clusters.csv"] {
        summary.output(f);
    }
    finish(summary, out, strict)
}

/// Post-process one label map: assign the subtype, then apply its rules.
pub(super) fn postprocess(
    case: &CaseEntry,
    cfg: &TaskConfig,
    model: &SubtypeModel,
    policy: &ThresholdPolicy,
    labels: &LabelVolume,
) -> subseg::Result<(Option<FeatureVector>, Option<usize>, LabelVolume)> {
    let (fv, cluster) = case_cluster(case, cfg, model, labels)?;
    let out = match cluster {
        Some(c) => apply_policy(labels, c, policy)?,
        None => {
            log::warn!("case {}: empty whole tumor, labels left unchanged", case.id);
            labels.clone()
        }
    };
    Ok((fv, cluster, out))
}

pub fn postproc_apply(
    manifest: &Manifest,
    cfg: &TaskConfig,
    model_path: &Path,
    policy_path: &Path,
    out: &Path,
    strict: bool,
) -> CliResult<()> {
    let dir = out.join("final");
    create_dir(&dir)?;
    let mut summary = RunSummary::new("postproc-apply", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());
    let model = load_model(model_path, cfg)?;
    let policy = load_policy(policy_path, cfg, &model)?;
    let needs = Needs {
        sequences: true,
        prediction: true,
        ..Needs::default()
    };
    let cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    let results = per_case(&cases, |c| {
        let labels = read_case_labels(c.prediction.as_ref().expect("checked"), cfg)?;
        let (_, cluster, final_labels) = postprocess(c, cfg, &model, &policy, &labels)?;
        write_labels_atomic(&final_labels, &labels_path(&dir, &c.id))?;
        Ok(cluster)
    });
    let assigned = collect_ok(results, &mut summary);
    write_csv(&out.join("clusters.csv"), &["case_id", "cluster"], &cluster_rows(&assigned))?;
    summary.output("clusters.csv");
    for (id, _) in &assigned {
        summary.output(format!("final/{id}.nii.gz"));
        summary.processed.push(id.clone());
    }
    finish(summary, out, strict)
}

use std::path::Path;

use subseg::radiomics::{feature_names, write_feature_csv, FeatureVector};

use super::*;

pub struct FeatureTable {
    pub rows: Vec<(String, FeatureVector)>,
    pub empty_wt: Vec<String>,
}

/// Extracts features of `cases` with the WT taken from `source`, recording
/// failures in the summary.
pub(super) fn extract_all(cases: &[&CaseEntry], cfg: &TaskConfig, source: WtSource, summary: &mut RunSummary) -> FeatureTable {
    let results = per_case(cases, |c| {
        let path = wt_path(c, source).ok_or_else(|| subseg::Error::invalid("no label map for the WT"))?;
        let labels = read_case_labels(path, cfg)?;
        case_features(c, cfg, &labels.foreground())
    });
    let mut table = FeatureTable {
        rows: Vec::new(),
        empty_wt: Vec::new(),
    };
    for (id, f) in collect_ok(results, summary) {
        match f {
            CaseFeatures::Extracted(fv) => table.rows.push((id, fv)),
            CaseFeatures::EmptyWt => {
                log::warn!("case {id}: empty whole tumor, no features");
                table.empty_wt.push(id);
            }
        }
    }
    table
}

pub(super) fn write_table(out: &Path, cfg: &TaskConfig, table: &FeatureTable, summary: &mut RunSummary) -> CliResult<()> {
    write_feature_csv(out.join("features.csv"), &feature_names(&cfg.sequences), &table.rows)?;
    let skipped: Vec<Vec<String>> = table
        .empty_wt
        .iter()
        .map(|id| vec![id.clone(), "empty whole tumor".to_string()])
        .collect();
    write_csv(&out.join("features_skipped.csv"), &["case_id", "reason"], &skipped)?;
    summary.output("features.csv");
    summary.output("features_skipped.csv");
    summary.processed.extend(table.rows.iter().map(|(id, _)| id.clone()));
    Ok(())
}

pub fn features(manifest: &Manifest, cfg: &TaskConfig, source: WtSource, out: &Path, strict: bool) -> CliResult<()> {
    create_dir(out)?;
    let mut summary = RunSummary::new("features", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());
    let needs = Needs {
        sequences: true,
        prediction: source == WtSource::Prediction,
        ground_truth: source == WtSource::Gt,
        ..Needs::default()
    };
    let cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    let table = extract_all(&cases, cfg, source, &mut summary);
    write_table(out, cfg, &table, &mut summary)?;
    finish(summary, out, strict)
}

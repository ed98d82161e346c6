use std::path::Path;

use subseg::subtype::{stratified_folds, FeatureMatrix, SubtypeModel};

use super::*;

/// Subtype-stratified folds: every case is assigned to its subtype, then
/// cases are dealt round-robin over the folds cluster by cluster.
pub fn folds(features_csv: &Path, model_path: &Path, n_folds: usize, cfg: &TaskConfig, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    let mut summary = RunSummary::new("folds", &cfg.task, cfg.hash(), cfg.subtype.seed);
    let matrix = FeatureMatrix::read_csv(features_csv)?;
    let model = SubtypeModel::load(model_path)?;
    if matrix.feature_names() != model.feature_names.as_slice() {
        return Err(CliError::validation("feature columns do not match the subtype model"));
    }
    let clusters = matrix
        .rows()
        .iter()
        .map(|r| model.assign_values(r))
        .collect::<subseg::Result<Vec<usize>>>()?;
    let folds = stratified_folds(matrix.case_ids(), &clusters, n_folds)?;
    let mut rows: Vec<Vec<String>> = matrix
        .case_ids()
        .iter()
        .zip(clusters.iter().zip(&folds))
        .map(|(id, (c, f))| vec![id.clone(), c.to_string(), f.to_string()])
        .collect();
    rows.sort();
    write_csv(&out.join("folds.csv"), &["case_id", "cluster", "fold"], &rows)?;
    summary.processed = matrix.case_ids().to_vec();
    summary.output("folds.csv");
    finish(summary, out, false)
}

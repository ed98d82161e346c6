use std::path::Path;

use subseg::radiomics::feature_names;
use subseg::subtype::{fit_subtype_model, FeatureMatrix};

use super::*;

pub fn cluster_fit(features_csv: &Path, cfg: &TaskConfig, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    let mut summary = RunSummary::new("cluster-fit", &cfg.task, cfg.hash(), cfg.subtype.seed);
    let matrix = FeatureMatrix::read_csv(features_csv)?;
    if matrix.feature_names() != feature_names(&cfg.sequences).as_slice() {
        return Err(CliError::validation(format!(
            "{}: feature columns do not match the configured sequences",
            features_csv.display()
        )));
    }
    let model = fit_subtype_model(&matrix, &cfg.subtype)?;
    log::info!(
        "fitted {} subtypes on {} cases ({} principal components)",
        model.k,
        matrix.len(),
        model.pca.retained()
    );
    model.save(out.join("subtype_model.json"))?;
    let rows: Vec<Vec<String>> = model
        .training_assignments
        .iter()
        .map(|(id, c)| vec![id.clone(), c.to_string()])
        .collect();
    write_csv(&out.join("training_clusters.csv"), &["case_id", "cluster"], &rows)?;
    summary.processed = matrix.case_ids().to_vec();
    summary.output("subtype_model.json");
    summary.output("training_clusters.csv");
    finish(summary, out, false)
}

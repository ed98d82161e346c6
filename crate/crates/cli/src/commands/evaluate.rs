use std::path::Path;

use subseg::metrics::{evaluate_case, evaluate_dataset, write_aggregate_csv, write_case_csv, CaseReport};

use super::*;

pub(super) fn write_reports(out: &Path, reports: &[CaseReport], summary: &mut RunSummary) -> CliResult<()> {
    write_case_csv(out.join("report_cases.csv"), reports)?;
    write_aggregate_csv(out.join("report_summary.csv"), &evaluate_dataset(reports)?)?;
    summary.output("report_cases.csv");
    summary.output("report_summary.csv");
    Ok(())
}

pub fn evaluate(manifest: &Manifest, cfg: &TaskConfig, out: &Path, strict: bool) -> CliResult<()> {
    create_dir(out)?;
    let mut summary = RunSummary::new("evaluate", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());
    let needs = Needs {
        prediction: true,
        ground_truth: true,
        ..Needs::default()
    };
    let cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    if cases.is_empty() {
        summary.write(out)?;
        return Err(CliError::validation("no case has both a prediction and a ground truth"));
    }
    let spec = cfg.region_spec();
    let results = per_case(&cases, |c| {
        let pred = read_case_labels(c.prediction.as_ref().expect("checked"), cfg)?;
        let gt = read_case_labels(c.ground_truth.as_ref().expect("checked"), cfg)?;
        evaluate_case(&c.id, &pred, &gt, &spec, &cfg.metrics)
    });
    let reports: Vec<CaseReport> = collect_ok(results, &mut summary).into_iter().map(|(_, r)| r).collect();
    if reports.is_empty() {
        summary.write(out)?;
        return Err(CliError::Processing("every case failed".into()));
    }
    write_reports(out, &reports, &mut summary)?;
    summary.processed = reports.iter().map(|r| r.case_id.clone()).collect();
    finish(summary, out, strict)
}

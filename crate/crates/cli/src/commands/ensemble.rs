use std::path::Path;

use super::*;

pub fn ensemble(manifest: &Manifest, cfg: &TaskConfig, out: &Path, strict: bool) -> CliResult<()> {
    let dir = out.join("ensemble");
    create_dir(&dir)?;
    let mut summary = RunSummary::new("ensemble", &cfg.task, cfg.hash(), cfg.subtype.seed);
    summary.manifest_sha256 = Some(manifest.digest().to_string());
    let needs = Needs {
        models: true,
        ..Needs::default()
    };
    let cases = usable_cases(manifest, cfg, needs, strict, &mut summary)?;
    let weights = active_weights(cfg)?;
    let results = per_case(&cases, |c| {
        let labels = ensemble_case(c, cfg, &weights)?;
        write_labels_atomic(&labels, &labels_path(&dir, &c.id))
    });
    for (id, ()) in collect_ok(results, &mut summary) {
        summary.output(format!("ensemble/{id}.nii.gz"));
        summary.processed.push(id);
    }
    finish(summary, out, strict)
}

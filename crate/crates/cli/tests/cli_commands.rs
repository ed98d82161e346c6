mod common;

use common::*;
use serde_json::json;
use subseg::config::TaskConfig;
use subseg::fusion::{argmax_labels, fuse, EnsembleWeights, ProbabilityStack};
use subseg::postproc::ThresholdPolicy;
use subseg::radiomics::feature_names;
use subseg::subtype::SubtypeModel;
use subseg::volume::read_labels;
use subseg_oracles::fixtures::blob_dataset;

fn read(p: &std::path::Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn summary(dir: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("run_summary.json"))).unwrap()
}

fn write_config(f: &Fixture, name: &str, edit: impl FnOnce(&mut TaskConfig)) -> String {
    let mut cfg = TaskConfig::met();
    edit(&mut cfg);
    let p = f.path(name);
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn features_table_and_rerun() {
    let f = build(Options {
        cases: 2,
        ..Options::default()
    });
    let out = f.out("feat");
    assert_eq!(cli(&["features", "--manifest", s(&f.manifest), "--out", s(&out)]), 0);
    let text = read(&out.join("features.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let mut header = vec!["case_id".to_string()];
    header.extend(feature_names(&TaskConfig::met().sequences));
    assert_eq!(lines[0], header.join(","));
    assert!(lines[1].starts_with("case-000,") && lines[2].starts_with("case-001,"));

    let again = f.out("feat2");
    assert_eq!(cli(&["features", "--manifest", s(&f.manifest), "--out", s(&again), "--jobs", "1"]), 0);
    assert_eq!(snapshot(&out), snapshot(&again));
    let sm = summary(&out);
    assert_eq!(sm["command"], "features");
    assert_eq!(sm["config_hash"], TaskConfig::met().hash());
    assert_eq!(sm["seed"], 20240);
}

#[test]
fn empty_whole_tumor_goes_to_sidecar() {
    let f = build(Options {
        cases: 2,
        ..Options::default()
    });
    let empty = subseg::volume::LabelVolume::new(geometry(), vec![0; geometry().len()], TaskConfig::met().alphabet).unwrap();
    subseg::volume::write_labels(&empty, f.path("gt/case-001.nii.gz")).unwrap();
    let out = f.out("feat");
    assert_eq!(cli(&["features", "--manifest", s(&f.manifest), "--out", s(&out)]), 0);
    assert_eq!(read(&out.join("features.csv")).lines().count(), 2);
    assert_eq!(read(&out.join("features_skipped.csv")), "case_id,reason\ncase-001,empty whole tumor\n");
}

#[test]
fn cluster_fit_recovers_blobs_and_is_reproducible() {
    let f = build(Options {
        cases: 1,
        ..Options::default()
    });
    let names = feature_names(&TaskConfig::met().sequences);
    let (rows, _) = blob_dataset(3, 30, names.len(), 0.1, 4);
    let mut text = format!("case_id,{}\n", names.join(","));
    for (i, r) in rows.iter().enumerate() {
        let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("c{i:02},{}\n", vals.join(",")));
    }
    let csv = f.path("blobs.csv");
    std::fs::write(&csv, text).unwrap();
    for run in ["m1", "m2"] {
        assert_eq!(cli(&["cluster-fit", "--features", s(&csv), "--config", "met", "--out", s(&f.out(run))]), 0);
    }
    let a = std::fs::read(f.out("m1").join("subtype_model.json")).unwrap();
    assert_eq!(a, std::fs::read(f.out("m2").join("subtype_model.json")).unwrap());
    assert_eq!(SubtypeModel::load(f.out("m1").join("subtype_model.json")).unwrap().k, 3);

    let small = f.path("small.csv");
    let full = read(&csv);
    let two: Vec<&str> = full.lines().take(3).collect();
    std::fs::write(&small, two.join("\n") + "\n").unwrap();
    assert_ne!(cli(&["cluster-fit", "--features", s(&small), "--config", "met", "--out", s(&f.out("m3"))]), 0);
}

#[test]
fn ensemble_matches_fusion_composition() {
    let f = build(Options {
        cases: 2,
        ..Options::default()
    });
    let out = f.out("ens");
    assert_eq!(cli(&["ensemble", "--manifest", s(&f.manifest), "--out", s(&out)]), 0);
    let cfg = TaskConfig::met();
    let ch = cfg.channel_names();
    for id in &f.ids {
        let stacks: Vec<ProbabilityStack> = ["nnunet", "mednext", "swinunetr"]
            .iter()
            .map(|m| ProbabilityStack::read(f.path(&format!("probs/{m}")), id, &ch).unwrap())
            .collect();
        let want = argmax_labels(&fuse(&stacks, &EnsembleWeights::met()).unwrap(), &cfg.alphabet).unwrap();
        let got = read_labels(out.join(format!("ensemble/{id}.nii.gz")), &cfg.alphabet).unwrap();
        assert_eq!(got, want);
    }

    let single = write_config(&f, "single.json", |c| {
        c.ensemble = EnsembleWeights::new(vec![("mednext".into(), 1.0)]).unwrap();
    });
    let out1 = f.out("ens1");
    assert_eq!(cli(&["ensemble", "--manifest", s(&f.manifest), "--config", &single, "--out", s(&out1)]), 0);
    let stack = ProbabilityStack::read(f.path("probs/mednext"), "case-000", &ch).unwrap();
    let got = read_labels(out1.join("ensemble/case-000.nii.gz"), &cfg.alphabet).unwrap();
    assert_eq!(got, argmax_labels(&stack, &cfg.alphabet).unwrap());
}

#[test]
fn missing_inputs_fail_strictly_or_are_skipped() {
    let f = build(Options {
        cases: 2,
        ..Options::default()
    });
    std::fs::remove_file(f.path("probs/mednext/case-001_SNFH.nii.gz")).unwrap();
    let strict_out = f.out("strict");
    assert_eq!(cli(&["ensemble", "--strict", "--manifest", s(&f.manifest), "--out", s(&strict_out)]), 1);
    assert!(!strict_out.join("ensemble/case-000.nii.gz").exists());

    let out = f.out("lenient");
    assert_eq!(cli(&["ensemble", "--manifest", s(&f.manifest), "--out", s(&out)]), 0);
    assert!(out.join("ensemble/case-000.nii.gz").exists());
    assert!(!out.join("ensemble/case-001.nii.gz").exists());
    let sm = summary(&out);
    assert_eq!(sm["skipped"][0]["case_id"], "case-001");

    edit_manifest(&f.manifest, |m| m["cases"][1]["id"] = json!("case-000"));
    assert_eq!(cli(&["ensemble", "--manifest", s(&f.manifest), "--out", s(&out)]), 1);
}

#[test]
fn postproc_fit_and_apply() {
    let f = build(Options {
        cases: 5,
        without_gt: 1,
        ..Options::default()
    });
    let (model, policy) = fit_artifacts(&f);
    let p = ThresholdPolicy::load(&policy).unwrap();
    assert!(p.stage1.iter().any(|r| r.label == 3 && r.min_volume_mm3 > 2.0));
    let sm = summary(&f.out("fit-policy"));
    assert_eq!(sm["skipped"][0]["case_id"], "case-004");
    assert_eq!(sm["skipped"][0]["reason"], "no ground truth");

    let out = f.out("apply");
    assert_eq!(
        cli(&["postproc-apply", "--manifest", s(&f.manifest), "--model", s(&model), "--policy", s(&policy), "--out", s(&out)]),
        0
    );
    let alphabet = TaskConfig::met().alphabet;
    for id in &f.ids[..4] {
        let fin = read_labels(out.join(format!("final/{id}.nii.gz")), &alphabet).unwrap();
        let gt = read_labels(f.path(&format!("gt/{id}.nii.gz")), &alphabet).unwrap();
        assert_eq!(fin, gt, "{id}");
    }

    // a grid of {0} fits a policy without effect
    let zero = write_config(&f, "zero.json", |c| {
        c.postproc.volumes_mm3 = vec![0.0];
        c.postproc.ratios = vec![0.0];
    });
    let zout = f.out("zero-policy");
    assert_eq!(
        cli(&["postproc-fit", "--manifest", s(&f.manifest), "--config", &zero, "--model", s(&model), "--out", s(&zout)]),
        0
    );
    let zp = ThresholdPolicy::load(zout.join("policy.json")).unwrap();
    assert!(zp.stage1.is_empty() && zp.stage2.is_empty());
    let zapply = f.out("zero-apply");
    assert_eq!(
        cli(&[
            "postproc-apply", "--manifest", s(&f.manifest), "--config", &zero, "--model", s(&model), "--policy",
            s(&zout.join("policy.json")), "--out", s(&zapply)
        ]),
        0
    );
    for id in &f.ids {
        let a = read_labels(zapply.join(format!("final/{id}.nii.gz")), &alphabet).unwrap();
        let b = read_labels(f.path(&format!("cv/{id}.nii.gz")), &alphabet).unwrap();
        assert_eq!(a, b);
    }

    // a policy covering fewer clusters than the model leaves the rest alone
    let mut narrow = p.clone();
    narrow.clusters = 0;
    narrow.stage1.clear();
    narrow.stage2.clear();
    let npath = f.path("narrow.json");
    narrow.save(&npath).unwrap();
    let nout = f.out("narrow-apply");
    assert_eq!(
        cli(&["postproc-apply", "--manifest", s(&f.manifest), "--model", s(&model), "--policy", s(&npath), "--out", s(&nout)]),
        0
    );
    let a = read_labels(nout.join("final/case-000.nii.gz"), &alphabet).unwrap();
    assert_eq!(a, read_labels(f.path("cv/case-000.nii.gz"), &alphabet).unwrap());
}

#[test]
fn evaluate_reports() {
    let f = build(Options {
        cases: 3,
        islands: false,
        ..Options::default()
    });
    let out = f.out("eval");
    assert_eq!(cli(&["evaluate", "--manifest", s(&f.manifest), "--out", s(&out)]), 0);
    let text = read(&out.join("report_cases.csv"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[2], "1");
        assert_eq!(&rec[3], "0");
        n += 1;
    }
    assert_eq!(n, 9);
    assert!(read(&out.join("report_summary.csv")).starts_with("statistic,"));

    edit_manifest(&f.manifest, |m| m["cases"] = json!([]));
    assert_eq!(cli(&["evaluate", "--manifest", s(&f.manifest), "--out", s(&f.out("eval2"))]), 1);
}

#[test]
fn pipeline_resume_and_guard() {
    let f = build(Options::default());
    let (model, policy) = fit_artifacts(&f);
    let run = |out: &std::path::Path, extra: &[&str]| {
        let mut args = vec!["pipeline", "--manifest", s(&f.manifest), "--model", s(&model), "--policy", s(&policy), "--out", s(out)];
        args.extend_from_slice(extra);
        cli(&args)
    };
    let out = f.out("pipe");
    assert_eq!(run(&out, &[]), 0);
    let first = snapshot(&out);
    assert!(first.contains_key("report_cases.csv"));
    assert!(first.contains_key("final/case-004.nii.gz"));

    std::fs::remove_file(out.join("final/case-002.nii.gz")).unwrap();
    std::fs::remove_file(out.join("ensemble/case-003.nii.gz")).unwrap();
    assert_eq!(run(&out, &["--resume"]), 0);
    assert_eq!(snapshot(&out), first);

    let other = f.path("other-policy.json");
    let mut p = ThresholdPolicy::load(&policy).unwrap();
    p.provenance = "edited".into();
    p.save(&other).unwrap();
    let mut args = vec!["pipeline", "--resume", "--manifest", s(&f.manifest), "--model", s(&model), "--policy", s(&other), "--out", s(&out)];
    assert_eq!(cli(&args), 1);
    args.retain(|a| *a != "--resume");
    assert_eq!(cli(&args), 0);
}

#[test]
fn folds_are_stratified() {
    let f = build(Options::default());
    let (model, _) = fit_artifacts(&f);
    let out = f.out("folds");
    let feats = f.out("fit-features").join("features.csv");
    assert_eq!(
        cli(&["folds", "--features", s(&feats), "--model", s(&model), "--config", "met", "--folds", "2", "--out", s(&out)]),
        0
    );
    let text = read(&out.join("folds.csv"));
    assert!(text.starts_with("case_id,cluster,fold\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn bad_arguments_are_validation_failures() {
    assert_eq!(cli(&["evaluate", "--manifest", "/no/such/manifest.json", "--out", "/tmp/x"]), 1);
    assert_eq!(cli(&["no-such-command"]), 1);
    let f = build(Options {
        cases: 1,
        ..Options::default()
    });
    assert_eq!(cli(&["evaluate", "--manifest", s(&f.manifest), "--config", "ped", "--out", s(&f.out("e"))]), 1);
}

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{relabel_in_place, RelabelRule, RemovalRule, ThresholdPolicy, POLICY_FORMAT, POLICY_VERSION};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_regions, MetricConfig, Region, RegionSpec};
use crate::morphology::remove_small_in_place;
use crate::stats::mean;
use crate::volume::LabelVolume;

/// A training case for policy fitting.
#[derive(Debug, Clone)]
pub struct FitCase {
    pub case_id: String,
    pub prediction: LabelVolume,
    pub ground_truth: LabelVolume,
    pub cluster: usize,
}

/// Search grids for both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocGrid {
    /// Candidate minimum component volumes in mm³.
    pub volumes_mm3: Vec<f64>,
    /// Candidate ratio thresholds.
    pub ratios: Vec<f64>,
    /// Allowed `(source, target)` relabel pairs, in preference order.
    pub relabel_menu: Vec<(u8, u8)>,
}

impl Default for PostprocGrid {
    fn default() -> Self {
        PostprocGrid {
            volumes_mm3: vec![0.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
            ratios: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            relabel_menu: Vec::new(),
        }
    }
}

fn sorted_grid(values: &[f64], what: &str, max: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{what} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0 && **v <= max)) {
        return Err(Error::Config(format!("{what} candidate {v} is out of range")));
    }
    let mut g = values.to_vec();
    // 0 is the no-op baseline every candidate is compared against
    g.push(0.0);
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// One evaluated candidate, for the audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub stage: u8,
    pub cluster: usize,
    pub label: u8,
    pub candidate: f64,
    pub target: Option<u8>,
    pub mean_lw_dice: f64,
}

/// Mean over cases of the mean lesion-wise Dice over `regions`.
fn objective(
    cases: &[&FitCase],
    predictions: &[Vec<u8>],
    spec: &RegionSpec,
    regions: &[&Region],
    cfg: &MetricConfig,
) -> Result<f64> {
    let per_case = cases
        .par_iter()
        .zip(predictions.par_iter())
        .map(|(c, p)| {
            let pred = c.prediction.with_data(p.clone())?;
            let r = evaluate_regions(&c.case_id, &pred, &c.ground_truth, spec, regions, cfg)?;
            Ok(mean(&r.regions.iter().map(|s| s.lw_dice).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&per_case))
}

fn cases_of(cases: &[FitCase], cluster: usize) -> Vec<&FitCase> {
    cases.iter().filter(|c| c.cluster == cluster).collect()
}

fn check_cases(cases: &[FitCase], clusters: usize) -> Result<()> {
    for c in cases {
        c.prediction.geometry().ensure_aligned(
            c.ground_truth.geometry(),
            &format!("case {}: prediction vs ground truth", c.case_id),
        )?;
        if c.cluster >= clusters {
            return Err(Error::invalid(format!("case {} has cluster {} of {clusters}", c.case_id, c.cluster)));
        }
    }
    Ok(())
}

/// Per cluster and label, the volume threshold maximizing mean lesion-wise
/// Dice of the regions containing the label; ties go to the smaller value.
/// Each label is searched independently on the original predictions.
pub fn fit_stage1(
    cases: &[FitCase],
    clusters: usize,
    volumes_mm3: &[f64],
    spec: &RegionSpec,
    cfg: &MetricConfig,
) -> Result<(Vec<RemovalRule>, Vec<FitRecord>)> {
    check_cases(cases, clusters)?;
    let grid = sorted_grid(volumes_mm3, "volume", f64::INFINITY)?;
    let mut rules = Vec::new();
    let mut records = Vec::new();
    for cluster in 0..clusters {
        let members = cases_of(cases, cluster);
        for label in spec.alphabet.ids() {
            let regions = spec.regions_containing(label);
            if members.is_empty() || regions.is_empty() {
                if members.is_empty() {
                    log::warn!("cluster {cluster} has no fitting cases; label {label} keeps threshold 0");
                }
                rules.push(RemovalRule {
                    cluster,
                    label,
                    min_volume_mm3: 0.0,
                });
                continue;
            }
            let scores = grid
                .iter()
                .map(|&v| {
                    let preds: Vec<Vec<u8>> = members
                        .iter()
                        .map(|c| {
                            let mut d = c.prediction.data().to_vec();
                            remove_small_in_place(c.prediction.geometry(), &mut d, label, v, cfg.connectivity);
                            d
                        })
                        .collect();
                    objective(&members, &preds, spec, &regions, cfg)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate() {
                records.push(FitRecord {
                    stage: 1,
                    cluster,
                    label,
                    candidate: grid[i],
                    target: None,
                    mean_lw_dice: s,
                });
                if s > scores[best] {
                    best = i;
                }
            }
            assert!(scores[best] >= scores[0], "stage-1 choice lowers the fitting score");
            log::debug!("cluster {cluster} label {label}: threshold {} mm3 (score {})", grid[best], scores[best]);
            rules.push(RemovalRule {
                cluster,
                label,
                min_volume_mm3: grid[best],
            });
        }
    }
    Ok((rules, records))
}

/// Relabel rules fitted on stage-1 output. Per cluster, source labels are
/// visited in menu order; the best (ratio, target) candidate is adopted only
/// if it strictly raises mean lesion-wise Dice, and adopted rules carry over
/// to the search for later sources. Ties go to the smaller ratio, then to
/// menu order.
pub fn fit_stage2(
    cases: &[FitCase],
    clusters: usize,
    ratios: &[f64],
    menu: &[(u8, u8)],
    spec: &RegionSpec,
    cfg: &MetricConfig,
) -> Result<(Vec<RelabelRule>, Vec<FitRecord>)> {
    check_cases(cases, clusters)?;
    let grid = sorted_grid(ratios, "ratio", 1.0)?;
    for &(s, t) in menu {
        if s == 0 || !spec.alphabet.contains(s) || !spec.alphabet.contains(t) || s == t {
            return Err(Error::Config(format!("invalid relabel pair {s} -> {t}")));
        }
    }
    let mut sources: Vec<u8> = Vec::new();
    for &(s, _) in menu {
        if !sources.contains(&s) {
            sources.push(s);
        }
    }
    let mut rules = Vec::new();
    let mut records = Vec::new();
    for cluster in 0..clusters {
        let members = cases_of(cases, cluster);
        if members.is_empty() {
            log::warn!("cluster {cluster} has no fitting cases; no relabel rules");
            continue;
        }
        let mut current: Vec<Vec<u8>> = members.iter().map(|c| c.prediction.data().to_vec()).collect();
        for &source in &sources {
            let targets: Vec<u8> = menu.iter().filter(|(s, _)| *s == source).map(|&(_, t)| t).collect();
            let regions: Vec<&Region> = spec
                .regions
                .iter()
                .filter(|r| r.contains(source) || targets.iter().any(|&t| r.contains(t)))
                .collect();
            if regions.is_empty() {
                continue;
            }
            let baseline = objective(&members, &current, spec, &regions, cfg)?;
            let mut best: Option<(RelabelRule, f64, Vec<Vec<u8>>)> = None;
            for &ratio in &grid {
                for &target in &targets {
                    let rule = RelabelRule {
                        cluster,
                        label: source,
                        ratio,
                        target,
                    };
                    let preds: Vec<Vec<u8>> = current
                        .iter()
                        .map(|d| {
                            let mut d = d.clone();
                            relabel_in_place(&mut d, &rule);
                            d
                        })
                        .collect();
                    let score = objective(&members, &preds, spec, &regions, cfg)?;
                    records.push(FitRecord {
                        stage: 2,
                        cluster,
                        label: source,
                        candidate: ratio,
                        target: Some(target),
                        mean_lw_dice: score,
                    });
                    if score > best.as_ref().map_or(baseline, |b| b.1) {
                        best = Some((rule, score, preds));
                    }
                }
            }
            if let Some((rule, score, preds)) = best {
                assert!(score > baseline);
                log::debug!(
                    "cluster {cluster}: relabel {} -> {} below ratio {} (score {baseline} -> {score})",
                    rule.label,
                    rule.target,
                    rule.ratio
                );
                rules.push(rule);
                current = preds;
            }
        }
    }
    Ok((rules, records))
}

/// Stage 1, then stage 2 on the stage-1 output, assembled into a policy.
pub fn fit_policy(
    cases: &[FitCase],
    clusters: usize,
    grid: &PostprocGrid,
    spec: &RegionSpec,
    cfg: &MetricConfig,
    provenance: &str,
) -> Result<(ThresholdPolicy, Vec<FitRecord>)> {
    let (stage1, mut records) = fit_stage1(cases, clusters, &grid.volumes_mm3, spec, cfg)?;
    let refined: Vec<FitCase> = cases
        .iter()
        .map(|c| {
            let mut d = c.prediction.data().to_vec();
            let mut own: Vec<&RemovalRule> = stage1.iter().filter(|r| r.cluster == c.cluster).collect();
            own.sort_by_key(|r| r.label);
            for r in own {
                remove_small_in_place(c.prediction.geometry(), &mut d, r.label, r.min_volume_mm3, cfg.connectivity);
            }
            Ok(FitCase {
                prediction: c.prediction.with_data(d)?,
                ..c.clone()
            })
        })
        .collect::<Result<_>>()?;
    let (stage2, rec2) = fit_stage2(&refined, clusters, &grid.ratios, &grid.relabel_menu, spec, cfg)?;
    records.extend(rec2);
    let policy = ThresholdPolicy {
        format: POLICY_FORMAT.to_string(),
        version: POLICY_VERSION,
        task: spec.task.clone(),
        alphabet: spec.alphabet.clone(),
        region_spec_hash: spec.hash(),
        connectivity: cfg.connectivity,
        clusters,
        provenance: provenance.to_string(),
        stage1: stage1.into_iter().filter(|r| r.min_volume_mm3 > 0.0).collect(),
        stage2,
    };
    policy.validate()?;
    Ok((policy, records))
}

/// `stage,cluster,label,candidate,target,mean_lw_dice`, one row per candidate.
pub fn write_fit_report(path: impl AsRef<Path>, records: &[FitRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["stage", "cluster", "label", "candidate", "target", "mean_lw_dice"])?;
    for r in records {
        w.write_record([
            r.stage.to_string(),
            r.cluster.to_string(),
            r.label.to_string(),
            r.candidate.to_string(),
            r.target.map(|t| t.to_string()).unwrap_or_default(),
            r.mean_lw_dice.to_string(),
        ])?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

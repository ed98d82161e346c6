//! Evaluation regions, overlap and surface-distance metrics, and reports.

mod distance;
mod lesion;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use lesion::LesionScores;

pub(crate) use distance::{dice_grid, hd95_grid};
use crate::error::{Error, Result};
use crate::morphology::Connectivity;
use crate::stats::{mean, percentile_sorted, std_pop};
use crate::volume::{Alphabet, LabelVolume, Mask};

/// Distance charged for a missing or spurious structure.
pub const HD_PENALTY_MM: f64 = 374.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub dilation_radius: usize,
    pub connectivity: Connectivity,
    pub penalty_mm: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            dilation_radius: 1,
            connectivity: Connectivity::TwentySix,
            penalty_mm: HD_PENALTY_MM,
        }
    }
}

/// A named union of base labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub labels: Vec<u8>,
}

impl Region {
    pub fn new(name: &str, labels: &[u8]) -> Self {
        Region {
            name: name.to_string(),
            labels: labels.to_vec(),
        }
    }

    pub fn contains(&self, label: u8) -> bool {
        self.labels.contains(&label)
    }
}

/// The evaluation regions of a task over its label alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub task: String,
    pub alphabet: Alphabet,
    pub regions: Vec<Region>,
}

impl RegionSpec {
    pub fn new(task: &str, alphabet: Alphabet, regions: Vec<Region>) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.labels.is_empty() {
                return Err(Error::Config(format!("region {} is empty", r.name)));
            }
            if let Some(l) = r.labels.iter().find(|&&l| l == 0 || !alphabet.contains(l)) {
                return Err(Error::Config(format!("region {} uses unknown label {l}", r.name)));
            }
            if regions[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::Config(format!("duplicate region {}", r.name)));
            }
        }
        Ok(RegionSpec {
            task: task.to_string(),
            alphabet,
            regions,
        })
    }

    /// Pediatric glioma: ET=1, NET=2, CC=3, ED=4.
    pub fn ped() -> Self {
        let alphabet = Alphabet::from_pairs(&[(1, "ET"), (2, "NET"), (3, "CC"), (4, "ED")]).expect("valid alphabet");
        let regions = vec![
            Region::new("ET", &[1]),
            Region::new("TC", &[1, 2, 3]),
            Region::new("WT", &[1, 2, 3, 4]),
            Region::new("NET", &[2]),
            Region::new("CC", &[3]),
            Region::new("ED", &[4]),
        ];
        RegionSpec::new("ped", alphabet, regions).expect("valid preset")
    }

    /// Brain metastases: NET=1, SNFH=2, ET=3.
    pub fn met() -> Self {
        let alphabet = Alphabet::from_pairs(&[(1, "NET"), (2, "SNFH"), (3, "ET")]).expect("valid alphabet");
        let regions = vec![
            Region::new("ET", &[3]),
            Region::new("TC", &[1, 3]),
            Region::new("WT", &[1, 2, 3]),
        ];
        RegionSpec::new("met", alphabet, regions).expect("valid preset")
    }

    /// Meningioma radiotherapy: a single gross tumor volume label.
    pub fn men_rt() -> Self {
        let alphabet = Alphabet::from_pairs(&[(1, "GTV")]).expect("valid alphabet");
        RegionSpec::new("men-rt", alphabet, vec![Region::new("GTV", &[1])]).expect("valid preset")
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }

    /// Regions whose label set includes `label`.
    pub fn regions_containing(&self, label: u8) -> Vec<&Region> {
        self.regions.iter().filter(|r| r.contains(label)).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("region spec serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn region_grid(labels: &LabelVolume, region: &Region) -> Vec<bool> {
    let mut member = [false; 256];
    for &l in &region.labels {
        member[l as usize] = true;
    }
    labels.data().iter().map(|&v| member[v as usize]).collect()
}

/// Voxels whose label belongs to `region`.
pub fn region_mask(labels: &LabelVolume, spec: &RegionSpec, region: &str) -> Result<Mask> {
    let r = spec
        .region(region)
        .ok_or_else(|| Error::invalid(format!("unknown region {region} for task {}", spec.task)))?;
    Mask::new(labels.geometry().clone(), region_grid(labels, r))
}

/// Dice coefficient; two empty masks score 1.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    a.geometry().ensure_aligned(b.geometry(), "dice")?;
    Ok(dice_grid(a.data(), b.data()))
}

/// 95th percentile of the pooled symmetric surface distances in mm.
///
/// Surfaces are foreground voxels with a background (or out-of-grid) face
/// neighbour; distances are between voxel centers. Two empty masks give 0 and
/// a single empty mask gives [`HD_PENALTY_MM`].
pub fn hd95(a: &Mask, b: &Mask) -> Result<f64> {
    a.geometry().ensure_aligned(b.geometry(), "hd95")?;
    let g = a.geometry();
    Ok(hd95_grid(g.dims, g.spacing, a.data(), b.data(), HD_PENALTY_MM))
}

pub fn lesionwise(pred: &Mask, gt: &Mask, config: &MetricConfig) -> Result<LesionScores> {
    pred.geometry().ensure_aligned(gt.geometry(), "lesion-wise evaluation")?;
    Ok(lesion::lesionwise_grid(gt.geometry(), pred.data(), gt.data(), config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScores {
    pub region: String,
    pub lw_dice: f64,
    pub lw_hd95: f64,
    pub dice: f64,
    pub hd95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub regions: Vec<RegionScores>,
}

impl CaseReport {
    pub fn region(&self, name: &str) -> Option<&RegionScores> {
        self.regions.iter().find(|r| r.region == name)
    }

    /// Mean lesion-wise Dice over the named regions.
    pub fn mean_lw_dice<'a>(&self, regions: impl IntoIterator<Item = &'a str>) -> f64 {
        let v: Vec<f64> = regions
            .into_iter()
            .filter_map(|n| self.region(n).map(|r| r.lw_dice))
            .collect();
        mean(&v)
    }
}

fn check_alphabet(labels: &LabelVolume, spec: &RegionSpec, what: &str) -> Result<()> {
    if labels.alphabet() != &spec.alphabet {
        return Err(Error::Schema(format!("{what} alphabet differs from task {}", spec.task)));
    }
    Ok(())
}

/// Scores of the listed regions only.
pub fn evaluate_regions(
    case_id: &str,
    pred: &LabelVolume,
    gt: &LabelVolume,
    spec: &RegionSpec,
    regions: &[&Region],
    config: &MetricConfig,
) -> Result<CaseReport> {
    pred.geometry()
        .ensure_aligned(gt.geometry(), &format!("case {case_id}: prediction vs ground truth"))?;
    check_alphabet(pred, spec, "prediction")?;
    check_alphabet(gt, spec, "ground truth")?;
    let g = gt.geometry();
    let regions = regions
        .iter()
        .map(|r| {
            let p = region_grid(pred, r);
            let t = region_grid(gt, r);
            let lw = lesion::lesionwise_grid(g, &p, &t, config);
            RegionScores {
                region: r.name.clone(),
                lw_dice: lw.lw_dice,
                lw_hd95: lw.lw_hd95,
                dice: dice_grid(&p, &t),
                hd95: hd95_grid(g.dims, g.spacing, &p, &t, config.penalty_mm),
            }
        })
        .collect();
    Ok(CaseReport {
        case_id: case_id.to_string(),
        regions,
    })
}

/// Lesion-wise and plain Dice and HD95 for every region of `spec`.
pub fn evaluate_case(
    case_id: &str,
    pred: &LabelVolume,
    gt: &LabelVolume,
    spec: &RegionSpec,
    config: &MetricConfig,
) -> Result<CaseReport> {
    let all: Vec<&Region> = spec.regions.iter().collect();
    evaluate_regions(case_id, pred, gt, spec, &all, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            mean: mean(values),
            std: std_pop(values),
            q25: percentile_sorted(&sorted, 25.0),
            median: percentile_sorted(&sorted, 50.0),
            q75: percentile_sorted(&sorted, 75.0),
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["lw_dice", "lw_hd95", "dice", "hd95"];

/// Aggregates per `<metric>.<region>` column, regions in spec order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub cases: usize,
    pub columns: Vec<(String, Summary)>,
}

impl DatasetReport {
    pub fn get(&self, metric: &str, region: &str) -> Option<&Summary> {
        let key = format!("{metric}.{region}");
        self.columns.iter().find(|(k, _)| *k == key).map(|(_, s)| s)
    }
}

pub fn evaluate_dataset(cases: &[CaseReport]) -> Result<DatasetReport> {
    let first = cases.first().ok_or_else(|| Error::invalid("no cases to aggregate"))?;
    let regions: Vec<&str> = first.regions.iter().map(|r| r.region.as_str()).collect();
    for c in cases {
        let names: Vec<&str> = c.regions.iter().map(|r| r.region.as_str()).collect();
        if names != regions {
            return Err(Error::Schema(format!("case {} has different regions", c.case_id)));
        }
    }
    let mut columns = Vec::new();
    for metric in METRIC_NAMES {
        for (k, region) in regions.iter().enumerate() {
            let values: Vec<f64> = cases
                .iter()
                .map(|c| {
                    let r = &c.regions[k];
                    match metric {
                        "lw_dice" => r.lw_dice,
                        "lw_hd95" => r.lw_hd95,
                        "dice" => r.dice,
                        _ => r.hd95,
                    }
                })
                .collect();
            columns.push((format!("{metric}.{region}"), Summary::of(&values)));
        }
    }
    Ok(DatasetReport {
        cases: cases.len(),
        columns,
    })
}

fn finish_csv<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// One row per case and region: `case_id,region,lw_dice,lw_hd95,dice,hd95`.
pub fn write_case_csv(path: impl AsRef<Path>, cases: &[CaseReport]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["case_id", "region", "lw_dice", "lw_hd95", "dice", "hd95"])?;
    for c in cases {
        for r in &c.regions {
            w.write_record([
                c.case_id.clone(),
                r.region.clone(),
                r.lw_dice.to_string(),
                r.lw_hd95.to_string(),
                r.dice.to_string(),
                r.hd95.to_string(),
            ])?;
        }
    }
    finish_csv(w, path)
}

/// Statistic rows (mean, std, q25, median, q75) by `<metric>.<region>` columns.
pub fn write_aggregate_csv(path: impl AsRef<Path>, report: &DatasetReport) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["statistic".to_string()];
    header.extend(report.columns.iter().map(|(k, _)| k.clone()));
    w.write_record(&header)?;
    let rows: [(&str, fn(&Summary) -> f64); 5] = [
        ("mean", |s| s.mean),
        ("std", |s| s.std),
        ("q25", |s| s.q25),
        ("median", |s| s.median),
        ("q75", |s| s.q75),
    ];
    for (name, f) in rows {
        let mut rec = vec![name.to_string()];
        rec.extend(report.columns.iter().map(|(_, s)| f(s).to_string()));
        w.write_record(&rec)?;
    }
    finish_csv(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn labels(spec: &RegionSpec, dims: [usize; 3], f: impl Fn([usize; 3]) -> u8) -> LabelVolume {
        let g = Geometry::new(dims, [1.0; 3]).unwrap();
        let data = (0..g.len()).map(|i| f(g.coords(i))).collect();
        LabelVolume::new(g, data, spec.alphabet.clone()).unwrap()
    }

    #[test]
    fn wt_of_edema_only_map() {
        let spec = RegionSpec::ped();
        let lv = labels(&spec, [4, 4, 4], |[x, _, _]| if x < 2 { 4 } else { 0 });
        let wt = region_mask(&lv, &spec, "WT").unwrap();
        assert_eq!(wt, lv.mask_of(4));
        assert!(region_mask(&lv, &spec, "XYZ").is_err());
    }

    #[test]
    fn wt_is_union_of_singletons() {
        let spec = RegionSpec::ped();
        let lv = labels(&spec, [5, 4, 3], |[x, y, z]| ((x + 2 * y + 3 * z) % 5) as u8);
        let mut union = Mask::empty(lv.geometry().clone());
        for l in 1..=4 {
            union = union.or(&lv.mask_of(l));
        }
        assert_eq!(region_mask(&lv, &spec, "WT").unwrap(), union);
    }

    #[test]
    fn preset_validation() {
        let a = Alphabet::from_pairs(&[(1, "A")]).unwrap();
        assert!(RegionSpec::new("t", a.clone(), vec![Region::new("X", &[])]).is_err());
        assert!(RegionSpec::new("t", a.clone(), vec![Region::new("X", &[2])]).is_err());
        assert!(RegionSpec::new("t", a, vec![Region::new("X", &[1]), Region::new("X", &[1])]).is_err());
        assert_eq!(RegionSpec::ped().hash(), RegionSpec::ped().hash());
        assert_ne!(RegionSpec::ped().hash(), RegionSpec::met().hash());
    }

    #[test]
    fn spurious_component_halves_lesionwise_dice() {
        let g = Geometry::new([12, 6, 6], [1.0; 3]).unwrap();
        let gt = Mask::from_fn(g.clone(), |[x, y, z]| x < 3 && (1..4).contains(&y) && (1..4).contains(&z));
        let pred = gt.or(&Mask::from_fn(g, |c| c == [10, 4, 4]));
        let s = lesionwise(&pred, &gt, &MetricConfig::default()).unwrap();
        assert_eq!(s.lw_dice, 0.5);
        assert_eq!(s.lw_hd95, 187.0);
        assert_eq!((s.gt_lesions, s.false_positives, s.false_negatives), (1, 1, 0));
        let same = lesionwise(&gt, &gt, &MetricConfig::default()).unwrap();
        assert_eq!((same.lw_dice, same.lw_hd95), (1.0, 0.0));
    }

    #[test]
    fn background_prediction_is_all_false_negatives() {
        let spec = RegionSpec::met();
        let gt = labels(&spec, [6, 6, 6], |[x, y, z]| if x + y + z < 4 { 3 } else if x > 3 { 2 } else { 0 });
        let pred = labels(&spec, [6, 6, 6], |_| 0);
        let r = evaluate_case("c", &pred, &gt, &spec, &MetricConfig::default()).unwrap();
        for s in &r.regions {
            assert_eq!(s.lw_dice, 0.0);
            assert_eq!(s.lw_hd95, 374.0);
            assert_eq!(s.dice, 0.0);
        }
        let same = evaluate_case("c", &gt, &gt, &spec, &MetricConfig::default()).unwrap();
        for s in &same.regions {
            assert_eq!((s.lw_dice, s.lw_hd95, s.dice, s.hd95), (1.0, 0.0, 1.0, 0.0));
        }
    }

    #[test]
    fn dataset_summary() {
        let case = |id: &str, d: f64| CaseReport {
            case_id: id.into(),
            regions: vec![RegionScores {
                region: "WT".into(),
                lw_dice: d,
                lw_hd95: 0.0,
                dice: d,
                hd95: 0.0,
            }],
        };
        let r = evaluate_dataset(&[case("a", 0.0), case("b", 1.0)]).unwrap();
        let s = r.get("dice", "WT").unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.5));
        let one = evaluate_dataset(&[case("a", 0.7)]).unwrap();
        let s = one.get("lw_dice", "WT").unwrap();
        assert_eq!((s.mean, s.median, s.std), (0.7, 0.7, 0.0));
        assert!(evaluate_dataset(&[]).is_err());
    }
}

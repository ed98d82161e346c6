//! Synthetic MET datasets written to disk with a manifest.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;
use subseg::config::TaskConfig;
use subseg::fusion::ProbabilityStack;
use subseg::volume::{write_labels, write_volume, Geometry, LabelVolume, Volume};
use subseg_oracles::rng::SplitMix64;

pub const DIMS: [usize; 3] = [20, 20, 20];

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub ids: Vec<String>,
}

impl Fixture {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[derive(Clone, Copy)]
pub struct Options {
    pub cases: usize,
    pub seed: u64,
    /// Cases without ground truth, counted from the end.
    pub without_gt: usize,
    /// Plant a 2-voxel ET island in the cross-validated predictions and in
    /// the first two models' probabilities.
    pub islands: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            cases: 5,
            seed: 1,
            without_gt: 0,
            islands: true,
        }
    }
}

pub fn geometry() -> Geometry {
    Geometry::new(DIMS, [1.0; 3]).unwrap()
}

/// Nested ellipsoid: ET core, NET ring, SNFH shell.
pub fn tumor(rng: &mut SplitMix64) -> Vec<u8> {
    let g = geometry();
    let c = [rng.range(8.0, 12.0), rng.range(8.0, 12.0), rng.range(8.0, 12.0)];
    let r = rng.range(5.0, 6.5);
    let stretch = [1.0, rng.range(0.8, 1.25), rng.range(0.8, 1.25)];
    (0..g.len())
        .map(|i| {
            let p = g.coords(i);
            let d = (0..3)
                .map(|a| ((p[a] as f64 - c[a]) / stretch[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < r - 3.0 {
                3
            } else if d < r - 1.5 {
                1
            } else if d < r {
                2
            } else {
                0
            }
        })
        .collect()
}

pub fn island_voxels(rng: &mut SplitMix64) -> [usize; 2] {
    let g = geometry();
    let x = 1 + rng.below(3);
    let y = 16 + rng.below(3);
    let z = 1 + rng.below(3);
    [g.index(x, y, z), g.index(x, y, z + 1)]
}

fn labels(data: Vec<u8>) -> LabelVolume {
    LabelVolume::new(geometry(), data, TaskConfig::met().alphabet).unwrap()
}

fn rel(p: &str) -> serde_json::Value {
    json!(p)
}

pub fn build(opts: Options) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for d in ["img", "gt", "cv", "probs/nnunet", "probs/mednext", "probs/swinunetr"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    let cfg = TaskConfig::met();
    let channels = cfg.channel_names();
    let mut rng = SplitMix64::new(opts.seed);
    let mut cases = Vec::new();
    let mut ids = Vec::new();
    for k in 0..opts.cases {
        let id = format!("case-{k:03}");
        let truth = tumor(&mut rng);
        let island = island_voxels(&mut rng);

        let mut seqs = BTreeMap::new();
        for (s, seq) in cfg.sequences.iter().enumerate() {
            let means = [100.0, 300.0 + 40.0 * s as f64, 500.0, 700.0 - 50.0 * s as f64];
            let data: Vec<f32> = truth
                .iter()
                .map(|&l| (means[l as usize] + 30.0 * rng.normal()) as f32)
                .collect();
            let path = format!("img/{id}_{seq}.nii.gz");
            write_volume(&Volume::from_f32(geometry(), data).unwrap(), root.join(&path)).unwrap();
            seqs.insert(seq.clone(), rel(&path));
        }

        let mut models = BTreeMap::new();
        for (m, name) in ["nnunet", "mednext", "swinunetr"].iter().enumerate() {
            let n = truth.len();
            let mut ch = vec![vec![0.0; n]; channels.len()];
            for i in 0..n {
                let mut target = truth[i] as usize;
                if opts.islands && m < 2 && island.contains(&i) {
                    target = 3;
                }
                let logits: Vec<f64> = (0..channels.len())
                    .map(|c| if c == target { 4.0 } else { 0.0 } + 0.8 * rng.normal())
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                for c in 0..channels.len() {
                    ch[c][i] = e[c] / s;
                }
            }
            let stack = ProbabilityStack::new(geometry(), channels.clone(), ch, true).unwrap();
            let dir_rel = format!("probs/{name}");
            stack.write(root.join(&dir_rel), &id).unwrap();
            models.insert(name.to_string(), rel(&dir_rel));
        }

        let mut cv = truth.clone();
        if opts.islands {
            for &i in &island {
                cv[i] = 3;
            }
        }
        let cv_path = format!("cv/{id}.nii.gz");
        write_labels(&labels(cv), root.join(&cv_path)).unwrap();

        let mut entry = json!({
            "id": id,
            "sequences": seqs,
            "models": models,
            "prediction": cv_path,
        });
        if k < opts.cases - opts.without_gt {
            let gt_path = format!("gt/{id}.nii.gz");
            write_labels(&labels(truth), root.join(&gt_path)).unwrap();
            entry["ground_truth"] = json!(gt_path);
        }
        cases.push(entry);
        ids.push(id);
    }
    let manifest = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&json!({ "task": "met", "cases": cases })).unwrap();
    std::fs::write(&manifest, text).unwrap();
    Fixture { dir, manifest, ids }
}

/// Rewrites the manifest through `edit`.
pub fn edit_manifest(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

/// Runs the CLI with `args` (program name prepended).
pub fn cli(args: &[&str]) -> u8 {
    let mut all = vec!["subseg"];
    all.extend_from_slice(args);
    subseg_cli::run_args(all)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Features → subtype model → policy, all fitted on the fixture's own cases.
/// Returns (model path, policy path).
pub fn fit_artifacts(f: &Fixture) -> (PathBuf, PathBuf) {
    let feats = f.out("fit-features");
    assert_eq!(cli(&["features", "--manifest", s(&f.manifest), "--out", s(&feats)]), 0);
    let model_dir = f.out("fit-model");
    assert_eq!(
        cli(&["cluster-fit", "--features", s(&feats.join("features.csv")), "--config", "met", "--out", s(&model_dir)]),
        0
    );
    let model = model_dir.join("subtype_model.json");
    let pol_dir = f.out("fit-policy");
    assert_eq!(
        cli(&["postproc-fit", "--manifest", s(&f.manifest), "--model", s(&model), "--out", s(&pol_dir)]),
        0
    );
    (model, pol_dir.join("policy.json"))
}

/// All files under `dir`, relative path → bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

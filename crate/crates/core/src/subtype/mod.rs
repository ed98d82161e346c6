//! Tumor subtypes: standardization, PCA to a variance threshold, and k-means
//! with the cluster count picked by mean silhouette.

mod kmeans;
mod pca;

use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_fit, nearest, select_k, silhouette_mean, KMeansConfig, KMeansFit, KSelection};
pub use pca::{pca_fit, standardize_fit, Pca, Standardization, CONSTANT_STD};

use crate::error::{Error, Result};
use crate::radiomics::FeatureVector;

/// Cases by features, read from or aligned with a feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    case_ids: Vec<String>,
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(case_ids: Vec<String>, feature_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if case_ids.len() != rows.len() {
            return Err(Error::Schema(format!("{} case ids for {} rows", case_ids.len(), rows.len())));
        }
        for (id, r) in case_ids.iter().zip(&rows) {
            if r.len() != feature_names.len() {
                return Err(Error::Schema(format!(
                    "case {id}: {} values for {} features",
                    r.len(),
                    feature_names.len()
                )));
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("case {id}: feature {} is not finite", feature_names[j])));
            }
        }
        Ok(FeatureMatrix {
            case_ids,
            feature_names,
            rows,
        })
    }

    pub fn from_vectors(rows: &[(String, FeatureVector)]) -> Result<Self> {
        let names = rows.first().map(|(_, fv)| fv.names().to_vec()).unwrap_or_default();
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for (id, fv) in rows {
            if fv.names() != names.as_slice() {
                return Err(Error::Schema(format!("case {id}: feature names differ from the first row")));
            }
            ids.push(id.clone());
            values.push(fv.values().to_vec());
        }
        FeatureMatrix::new(ids, names, values)
    }

    /// Parse a `case_id,<features...>` table.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("case_id") {
            return Err(Error::Schema(format!("{}: first column must be case_id", path.display())));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Schema(format!("case {id}: cannot parse value {s:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            ids.push(id);
            rows.push(row);
        }
        FeatureMatrix::new(ids, names, rows)
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeSettings {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub variance_threshold: f64,
}

impl Default for SubtypeSettings {
    fn default() -> Self {
        SubtypeSettings {
            k_min: 2,
            k_max: 8,
            seed: 20240,
            variance_threshold: 0.99,
        }
    }
}

impl SubtypeSettings {
    /// The k grid, clipped to what `n` cases can support.
    pub fn k_range(&self, n: usize) -> RangeInclusive<usize> {
        self.k_min.max(2)..=self.k_max.min(n.saturating_sub(1))
    }
}

pub const MODEL_FORMAT: &str = "subseg-subtype-model";
pub const MODEL_VERSION: u32 = 1;

/// A fitted subtype model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeModel {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    pub pca: Pca,
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    pub seed: u64,
    /// Mean silhouette for every k tried.
    pub silhouettes: Vec<(usize, f64)>,
    /// Training cases and their clusters, sorted by case id.
    pub training_assignments: Vec<(String, usize)>,
}

/// Fit standardization, PCA and k-means on a feature matrix.
pub fn fit_subtype_model(matrix: &FeatureMatrix, settings: &SubtypeSettings) -> Result<SubtypeModel> {
    let n = matrix.len();
    if n < 3 {
        return Err(Error::invalid(format!("subtype fitting needs at least 3 cases, got {n}")));
    }
    let standardization = standardize_fit(matrix.rows())?;
    let z: Vec<Vec<f64>> = matrix.rows().iter().map(|r| standardization.apply(r)).collect();
    let pca = pca_fit(&z, settings.variance_threshold)?;
    let projected: Vec<Vec<f64>> = z.iter().map(|r| pca.project(r)).collect();
    let cfg = KMeansConfig {
        seed: settings.seed,
        ..KMeansConfig::default()
    };
    let sel = select_k(&projected, settings.k_range(n), &cfg)?;
    log::info!(
        "subtype model: {} features, {} components, k = {}",
        matrix.feature_names().len(),
        pca.retained(),
        sel.k
    );
    let mut training_assignments: Vec<(String, usize)> = matrix
        .case_ids()
        .iter()
        .cloned()
        .zip(sel.fit.assignments.iter().copied())
        .collect();
    training_assignments.sort();
    Ok(SubtypeModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        feature_names: matrix.feature_names().to_vec(),
        standardization,
        pca,
        centroids: sel.fit.centroids,
        k: sel.k,
        seed: settings.seed,
        silhouettes: sel.scores,
        training_assignments,
    })
}

impl SubtypeModel {
    /// Standardized, projected coordinates of a raw feature row.
    pub fn embed(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                values.len()
            )));
        }
        Ok(self.pca.project(&self.standardization.apply(values)))
    }

    pub fn assign_values(&self, values: &[f64]) -> Result<usize> {
        Ok(nearest(&self.embed(values)?, &self.centroids).0)
    }

    pub fn training_cluster(&self, case_id: &str) -> Option<usize> {
        self.training_assignments
            .binary_search_by(|(id, _)| id.as_str().cmp(case_id))
            .ok()
            .map(|i| self.training_assignments[i].1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if raw.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(corrupt("not a subtype model".into()));
        }
        let found = raw.get("version").and_then(|v| v.as_u64());
        if found != Some(MODEL_VERSION as u64) {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: found.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: MODEL_VERSION.to_string(),
            });
        }
        let model: SubtypeModel = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
        model.check().map_err(|e| corrupt(e.to_string()))?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let d = self.feature_names.len();
        let m = self.pca.retained();
        let ok = self.standardization.means.len() == d
            && self.standardization.stds.len() == d
            && self.pca.components.iter().all(|c| c.len() == d)
            && self.centroids.len() == self.k
            && self.centroids.iter().all(|c| c.len() == m);
        if ok {
            Ok(())
        } else {
            Err(Error::Schema("inconsistent model dimensions".into()))
        }
    }
}

/// Cluster of a case's feature vector under a fitted model.
pub fn assign_subtype(model: &SubtypeModel, fv: &FeatureVector) -> Result<usize> {
    if fv.names() != model.feature_names.as_slice() {
        let hint = model
            .feature_names
            .iter()
            .zip(fv.names())
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!(" (expected {a}, found {b})"))
            .unwrap_or_default();
        return Err(Error::Schema(format!(
            "feature schema mismatch: model has {}, vector has {}{hint}",
            model.feature_names.len(),
            fv.len()
        )));
    }
    model.assign_values(fv.values())
}

/// Fold index per case: cases are taken cluster by cluster (ascending), by
/// case id within a cluster, and dealt round-robin over `n_folds`.
pub fn stratified_folds(case_ids: &[String], clusters: &[usize], n_folds: usize) -> Result<Vec<usize>> {
    if n_folds == 0 {
        return Err(Error::invalid("fold count must be positive"));
    }
    if case_ids.len() != clusters.len() {
        return Err(Error::invalid("one cluster per case is required"));
    }
    let mut order: Vec<usize> = (0..case_ids.len()).collect();
    order.sort_by(|&a, &b| clusters[a].cmp(&clusters[b]).then_with(|| case_ids[a].cmp(&case_ids[b])));
    let mut folds = vec![0; case_ids.len()];
    for (slot, &i) in order.iter().enumerate() {
        folds[i] = slot % n_folds;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> FeatureMatrix {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (b, center) in [[0.0, 0.0, 0.0], [50.0, 0.0, 10.0], [0.0, 60.0, -20.0]].iter().enumerate() {
            for i in 0..6 {
                let jitter = [(i % 3) as f64 * 0.5, (i / 3) as f64 * 0.5, (i % 2) as f64 * 0.3];
                ids.push(format!("case-{b}-{i}"));
                rows.push((0..3).map(|a| center[a] + jitter[a]).collect());
            }
        }
        FeatureMatrix::new(ids, vec!["a".into(), "b".into(), "c".into()], rows).unwrap()
    }

    #[test]
    fn fit_finds_three_blobs() {
        let m = blobs();
        let model = fit_subtype_model(&m, &SubtypeSettings::default()).unwrap();
        assert_eq!(model.k, 3);
        for (id, row) in m.case_ids().iter().zip(m.rows()) {
            assert_eq!(model.assign_values(row).unwrap(), model.training_cluster(id).unwrap());
        }
    }

    #[test]
    fn schema_mismatch() {
        let model = fit_subtype_model(&blobs(), &SubtypeSettings::default()).unwrap();
        let fv = FeatureVector::new(vec!["a".into(), "x".into(), "c".into()], vec![0.0; 3]).unwrap();
        assert!(matches!(assign_subtype(&model, &fv), Err(Error::Schema(_))));
    }

    #[test]
    fn equidistant_goes_to_smaller_id() {
        let mut model = fit_subtype_model(&blobs(), &SubtypeSettings::default()).unwrap();
        let m = model.pca.retained();
        model.k = 2;
        model.centroids = vec![vec![1.0; m], vec![-1.0; m]];
        model.standardization.means = vec![0.0; 3];
        model.standardization.stds = vec![1.0; 3];
        assert_eq!(model.assign_values(&[0.0, 0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn folds_round_robin() {
        let ids: Vec<String> = ["d", "a", "c", "b", "e"].iter().map(|s| s.to_string()).collect();
        let folds = stratified_folds(&ids, &[1, 0, 0, 1, 1], 2).unwrap();
        // order: a(0) c(0) b(1) d(1) e(1)
        assert_eq!(folds, vec![1, 0, 1, 0, 0]);
    }
}

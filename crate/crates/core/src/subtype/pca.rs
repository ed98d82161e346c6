use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations; near-constant columns use 1.
    pub stds: Vec<f64>,
}

/// Columns whose std falls below this are treated as constant.
pub const CONSTANT_STD: f64 = 1e-12;

pub fn standardize_fit(rows: &[Vec<f64>]) -> Result<Standardization> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid(format!("standardization needs at least 2 rows, got {n}")));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Schema("ragged feature matrix".into()));
    }
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut stds = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            stds[j] += (r[j] - means[j]).powi(2);
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s < CONSTANT_STD {
            *s = 1.0;
        }
    }
    Ok(Standardization { means, stds })
}

impl Standardization {
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Principal axes of standardized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Retained unit axes, one row per component (m x d).
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratio of every axis, descending (length d).
    pub explained_variance_ratio: Vec<f64>,
    pub variance_threshold: f64,
}

impl Pca {
    pub fn retained(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Eigendecomposition of the sample covariance; keeps the smallest number of
/// components whose cumulative explained-variance ratio reaches `threshold`.
/// Each axis is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(rows: &[Vec<f64>], threshold: f64) -> Result<Pca> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("variance threshold must be in (0, 1], got {threshold}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Schema("empty or ragged feature matrix".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("feature matrix has zero variance".into()));
    }
    let ratios: Vec<f64> = values.iter().map(|v| v / total).collect();

    let positive = values.iter().filter(|&&v| v > 0.0).count().max(1);
    let mut m = positive;
    let mut cum = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= threshold {
            m = i + 1;
            break;
        }
    }

    let components = order[..m]
        .iter()
        .map(|&i| {
            let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let mut lead = 0;
            for (j, v) in axis.iter().enumerate() {
                if v.abs() > axis[lead].abs() {
                    lead = j;
                }
            }
            if axis[lead] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            axis
        })
        .collect();
    Ok(Pca {
        components,
        explained_variance_ratio: ratios,
        variance_threshold: threshold,
    })
}

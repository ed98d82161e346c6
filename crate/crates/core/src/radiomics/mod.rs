//! Radiomic features of the largest whole-tumor component.
//!
//! Fourteen shape features are computed once per case and nineteen
//! first-order intensity features per MRI sequence. Texture-matrix families
//! are not implemented. Names are namespaced as `shape.<feature>` and
//! `<sequence>.firstorder.<feature>`.

mod firstorder;
mod shape;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use firstorder::{firstorder_features, firstorder_from_values, FIRSTORDER_FEATURES};
pub use shape::{shape_features, SHAPE_FEATURES};

use crate::error::{Error, Result};
use crate::morphology::{largest_component, Connectivity};
use crate::volume::{resample_isotropic, Interpolation, Mask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    /// Fixed bin width in intensity units; bins start at the in-mask minimum.
    pub bin_width: f64,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        DiscretizationSpec { bin_width: 25.0 }
    }
}

impl DiscretizationSpec {
    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::invalid(format!("bin width must be positive, got {bin_width}")));
        }
        Ok(DiscretizationSpec { bin_width })
    }
}

/// Named feature values in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Schema(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        if let Some((n, v)) = names.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(Error::Degenerate(format!("feature {n} is not finite ({v})")));
        }
        Ok(FeatureVector { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    fn push(&mut self, name: String, value: f64) {
        self.names.push(name);
        self.values.push(value);
    }
}

/// Canonical feature names for a sequence list.
pub fn feature_names(sequences: &[String]) -> Vec<String> {
    let mut names: Vec<String> = SHAPE_FEATURES.iter().map(|f| format!("shape.{f}")).collect();
    for s in sequences {
        names.extend(FIRSTORDER_FEATURES.iter().map(|f| format!("{s}.firstorder.{f}")));
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Isotropic spacing (mm) applied before measuring.
    pub spacing_mm: f64,
    pub discretization: DiscretizationSpec,
    pub connectivity: Connectivity,
}

/// Full per-case extraction: resample, keep the largest WT component, then
/// shape features followed by first-order features for each sequence.
pub fn extract_case_features(
    case_id: &str,
    sequences: &[(String, &Volume)],
    wt_mask: &Mask,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    for (name, v) in sequences {
        wt_mask
            .geometry()
            .ensure_aligned(v.geometry(), &format!("case {case_id}: sequence {name} vs WT mask"))?;
    }
    if wt_mask.is_empty() {
        return Err(Error::EmptyRoi {
            case: case_id.to_string(),
        });
    }
    let target = config.spacing_mm;
    let mask = wt_mask.resample_isotropic(target)?;
    let roi = match largest_component(&mask, config.connectivity) {
        Ok(m) => m,
        // a tiny lesion can vanish when resampled to a coarser grid
        Err(Error::EmptyMask) => {
            return Err(Error::EmptyRoi {
                case: case_id.to_string(),
            })
        }
        Err(e) => return Err(e),
    };

    let mut fv = FeatureVector {
        names: Vec::new(),
        values: Vec::new(),
    };
    for (name, value) in shape_features(&roi)? {
        fv.push(format!("shape.{name}"), value);
    }
    for (seq, image) in sequences {
        let resampled = resample_isotropic(image, target, Interpolation::Trilinear)?;
        for (name, value) in firstorder_features(&resampled, &roi, &config.discretization)? {
            fv.push(format!("{seq}.firstorder.{name}"), value);
        }
    }
    FeatureVector::new(fv.names, fv.values)
}

/// Write a feature table: header `case_id,<names...>`, one row per case.
pub fn write_feature_csv(path: impl AsRef<Path>, names: &[String], rows: &[(String, FeatureVector)]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["case_id".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (case, fv) in rows {
        if fv.names() != names {
            return Err(Error::Schema(format!("case {case}: feature names differ from the header")));
        }
        let mut rec = vec![case.clone()];
        rec.extend(fv.values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

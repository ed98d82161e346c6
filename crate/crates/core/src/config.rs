//! Task configuration: labels, regions, sequences and every tunable of the
//! pipeline, with presets for the three tumor types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::EnsembleWeights;
use crate::metrics::{MetricConfig, Region, RegionSpec};
use crate::morphology::Connectivity;
use crate::postproc::PostprocGrid;
use crate::radiomics::{DiscretizationSpec, FeatureConfig};
use crate::subtype::SubtypeSettings;
use crate::volume::Alphabet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub bin_width: f64,
    pub connectivity: Connectivity,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            bin_width: DiscretizationSpec::default().bin_width,
            connectivity: Connectivity::TwentySix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: String,
    pub alphabet: Alphabet,
    pub regions: Vec<Region>,
    pub sequences: Vec<String>,
    /// Isotropic spacing (mm) for feature extraction.
    pub spacing_mm: f64,
    pub ensemble: EnsembleWeights,
    pub subtype: SubtypeSettings,
    pub features: FeatureSettings,
    pub postproc: PostprocGrid,
    pub metrics: MetricConfig,
}

pub const PRESETS: [&str; 3] = ["ped", "men-rt", "met"];

fn four_sequences() -> Vec<String> {
    ["t1", "t1ce", "t2", "flair"].iter().map(|s| s.to_string()).collect()
}

impl TaskConfig {
    fn from_spec(spec: RegionSpec, sequences: Vec<String>, spacing_mm: f64, ensemble: EnsembleWeights, menu: Vec<(u8, u8)>) -> Self {
        TaskConfig {
            task: spec.task,
            alphabet: spec.alphabet,
            regions: spec.regions,
            sequences,
            spacing_mm,
            ensemble,
            subtype: SubtypeSettings::default(),
            features: FeatureSettings::default(),
            postproc: PostprocGrid {
                relabel_menu: menu,
                ..PostprocGrid::default()
            },
            metrics: MetricConfig::default(),
        }
    }

    pub fn ped() -> Self {
        // CC -> NET and ED -> background
        Self::from_spec(RegionSpec::ped(), four_sequences(), 1.0, EnsembleWeights::ped(), vec![(3, 2), (4, 0)])
    }

    pub fn men_rt() -> Self {
        Self::from_spec(
            RegionSpec::men_rt(),
            vec!["t1ce".to_string()],
            0.9375,
            EnsembleWeights::men_rt(),
            Vec::new(),
        )
    }

    pub fn met() -> Self {
        // NET -> SNFH
        Self::from_spec(RegionSpec::met(), four_sequences(), 1.0, EnsembleWeights::met(), vec![(1, 2)])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ped" => Some(Self::ped()),
            "men-rt" => Some(Self::men_rt()),
            "met" => Some(Self::met()),
            _ => None,
        }
    }

    /// Loads a JSON or TOML file (chosen by extension) and validates it.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TaskConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validated()
    }

    /// A preset name or a config file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::preset(name_or_path) {
            Some(c) => Ok(c),
            None if Path::new(name_or_path).exists() => Self::from_path(name_or_path),
            None => Err(Error::Config(format!(
                "{name_or_path} is neither a preset ({}) nor a readable file",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Re-checks every invariant and renormalizes the ensemble weights.
    pub fn validated(mut self) -> Result<Self> {
        self.alphabet = Alphabet::new(self.alphabet.labels().to_vec())?;
        RegionSpec::new(&self.task, self.alphabet.clone(), self.regions.clone())?;
        self.ensemble = EnsembleWeights::new(self.ensemble.models().to_vec())?;
        if self.sequences.is_empty() {
            return Err(Error::Config("no sequences configured".into()));
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return Err(Error::Config(format!("spacing must be positive, got {}", self.spacing_mm)));
        }
        DiscretizationSpec::new(self.features.bin_width)?;
        if !(self.subtype.variance_threshold > 0.0 && self.subtype.variance_threshold <= 1.0) {
            return Err(Error::Config("variance threshold must lie in (0, 1]".into()));
        }
        if self.subtype.k_min > self.subtype.k_max || self.subtype.k_min < 2 {
            return Err(Error::Config("k range must satisfy 2 <= k_min <= k_max".into()));
        }
        for &(s, t) in &self.postproc.relabel_menu {
            if s == 0 || s == t || !self.alphabet.contains(s) || !self.alphabet.contains(t) {
                return Err(Error::Config(format!("invalid relabel pair {s} -> {t}")));
            }
        }
        if !(self.metrics.penalty_mm >= 0.0 && self.metrics.penalty_mm.is_finite()) {
            return Err(Error::Config("penalty must be non-negative".into()));
        }
        Ok(self)
    }

    pub fn region_spec(&self) -> RegionSpec {
        RegionSpec::new(&self.task, self.alphabet.clone(), self.regions.clone()).expect("validated config")
    }

    /// Probability channel names: background, then the labels.
    pub fn channel_names(&self) -> Vec<String> {
        std::iter::once("background".to_string())
            .chain(self.alphabet.labels().iter().map(|l| l.name.clone()))
            .collect()
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            spacing_mm: self.spacing_mm,
            discretization: DiscretizationSpec {
                bin_width: self.features.bin_width,
            },
            connectivity: self.features.connectivity,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

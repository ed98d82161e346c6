//! Weighted ensembling of per-model class-probability volumes and decoding to
//! label maps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{read_volume, write_volume, Alphabet, Geometry, LabelVolume, Volume};

/// Tolerance on per-voxel channel sums of a normalized stack.
pub const NORMALIZED_TOL: f64 = 1e-3;

/// Per-class probability channels on a shared grid. Channel 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    geometry: Geometry,
    channel_names: Vec<String>,
    channels: Vec<Vec<f64>>,
    normalized: bool,
}

impl ProbabilityStack {
    /// Builds a stack; when `normalized` is set every voxel's channel sum
    /// must lie within [`NORMALIZED_TOL`] of 1.
    pub fn new(geometry: Geometry, channel_names: Vec<String>, channels: Vec<Vec<f64>>, normalized: bool) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("a probability stack needs at least one channel"));
        }
        if channel_names.len() != channels.len() {
            return Err(Error::Schema(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != geometry.len()) {
            return Err(Error::GeometryMismatch(format!(
                "channel {} has {} voxels, grid has {}",
                channel_names[c],
                channels[c].len(),
                geometry.len()
            )));
        }
        let stack = ProbabilityStack {
            geometry,
            channel_names,
            channels,
            normalized: false,
        };
        if normalized {
            if let Some(i) = (0..stack.geometry.len()).find(|&i| (stack.channel_sum(i) - 1.0).abs() > NORMALIZED_TOL) {
                return Err(Error::invalid(format!(
                    "voxel {i} has channel sum {} but the stack is marked normalized",
                    stack.channel_sum(i)
                )));
            }
        }
        Ok(ProbabilityStack { normalized, ..stack })
    }

    /// Builds a stack from per-channel volumes, marking it normalized when
    /// every voxel sums to 1 within tolerance.
    pub fn from_volumes(channel_names: Vec<String>, volumes: &[Volume]) -> Result<Self> {
        let first = volumes
            .first()
            .ok_or_else(|| Error::invalid("a probability stack needs at least one channel"))?;
        let geometry = first.geometry().clone();
        for (name, v) in channel_names.iter().zip(volumes) {
            geometry.ensure_aligned(v.geometry(), &format!("channel {name}"))?;
        }
        let channels: Vec<Vec<f64>> = volumes.iter().map(Volume::to_f64).collect();
        let mut stack = ProbabilityStack::new(geometry, channel_names, channels, false)?;
        stack.normalized = (0..stack.geometry.len()).all(|i| (stack.channel_sum(i) - 1.0).abs() <= NORMALIZED_TOL);
        Ok(stack)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn channel_sum(&self, voxel: usize) -> f64 {
        self.channels.iter().map(|c| c[voxel]).sum()
    }

    /// Path of one channel file: `<dir>/<case>_<channel>.nii.gz`.
    pub fn channel_path(dir: &Path, case_id: &str, channel: &str) -> PathBuf {
        dir.join(format!("{case_id}_{channel}.nii.gz"))
    }

    /// Reads one NIfTI file per channel.
    pub fn read(dir: impl AsRef<Path>, case_id: &str, channel_names: &[String]) -> Result<Self> {
        let dir = dir.as_ref();
        let volumes = channel_names
            .iter()
            .map(|c| read_volume(Self::channel_path(dir, case_id, c)))
            .collect::<Result<Vec<_>>>()?;
        ProbabilityStack::from_volumes(channel_names.to_vec(), &volumes)
    }

    /// Writes one float32 NIfTI file per channel.
    pub fn write(&self, dir: impl AsRef<Path>, case_id: &str) -> Result<()> {
        let dir = dir.as_ref();
        for (name, data) in self.channel_names.iter().zip(&self.channels) {
            let v = Volume::from_f32(self.geometry.clone(), data.iter().map(|&x| x as f32).collect())?;
            write_volume(&v, Self::channel_path(dir, case_id, name))?;
        }
        Ok(())
    }
}

pub const MODEL_NAMES: [&str; 3] = ["nnunet", "mednext", "swinunetr"];

/// Ordered per-model weights, normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    models: Vec<(String, f64)>,
}

impl EnsembleWeights {
    pub fn new(models: Vec<(String, f64)>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("no ensemble members"));
        }
        for (i, (name, w)) in models.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("weight of {name} must be finite and non-negative, got {w}")));
            }
            if models[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::invalid(format!("duplicate ensemble member {name}")));
            }
        }
        let total: f64 = models.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("ensemble weights are all zero"));
        }
        Ok(EnsembleWeights {
            models: models.into_iter().map(|(n, w)| (n, w / total)).collect(),
        })
    }

    fn preset(w: [f64; 3]) -> Self {
        EnsembleWeights::new(MODEL_NAMES.iter().zip(w).map(|(n, w)| (n.to_string(), w)).collect()).expect("valid preset")
    }

    pub fn ped() -> Self {
        Self::preset([0.33, 0.34, 0.33])
    }

    pub fn men_rt() -> Self {
        Self::preset([0.33, 0.33, 0.34])
    }

    pub fn met() -> Self {
        Self::preset([0.487, 0.513, 0.0])
    }

    pub fn models(&self) -> &[(String, f64)] {
        &self.models
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|(n, _)| n.as_str())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.models.iter().map(|(_, w)| *w).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Voxelwise weighted sum of the stacks, accumulated in model order.
/// Members with zero weight are not read at all.
pub fn fuse(stacks: &[ProbabilityStack], weights: &EnsembleWeights) -> Result<ProbabilityStack> {
    if stacks.is_empty() {
        return Err(Error::invalid("nothing to fuse"));
    }
    if stacks.len() != weights.len() {
        return Err(Error::invalid(format!("{} stacks for {} weights", stacks.len(), weights.len())));
    }
    let first = &stacks[0];
    for (s, (name, _)) in stacks.iter().zip(weights.models()).skip(1) {
        first.geometry.ensure_aligned(&s.geometry, &format!("stack of {name}"))?;
        if s.channel_names != first.channel_names {
            return Err(Error::Schema(format!("stack of {name} has channels {:?}", s.channel_names)));
        }
    }
    let active: Vec<(&ProbabilityStack, f64)> = stacks
        .iter()
        .zip(weights.weights())
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let n = first.geometry.len();
    let channels = (0..first.num_channels())
        .map(|c| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    for (s, w) in &active {
                        acc += w * s.channels[c][i];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(ProbabilityStack {
        geometry: first.geometry.clone(),
        channel_names: first.channel_names.clone(),
        channels,
        normalized: stacks.iter().all(|s| s.normalized),
    })
}

/// Per-voxel most probable class; ties go to the lower channel, so
/// background wins any tie.
pub fn argmax_labels(stack: &ProbabilityStack, alphabet: &Alphabet) -> Result<LabelVolume> {
    if stack.num_channels() != alphabet.len() + 1 {
        return Err(Error::Schema(format!(
            "{} channels for {} labels plus background",
            stack.num_channels(),
            alphabet.len()
        )));
    }
    let ids: Vec<u8> = std::iter::once(0).chain(alphabet.ids()).collect();
    let data = (0..stack.geometry.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0;
            for c in 1..stack.num_channels() {
                if stack.channels[c][i] > stack.channels[best][i] {
                    best = c;
                }
            }
            ids[best]
        })
        .collect();
    LabelVolume::new(stack.geometry.clone(), data, alphabet.clone())
}

/// Score-proportional weights. Models scoring below `floor` get weight 0.
pub fn estimate_weights(scores: &[(String, f64)], floor: f64) -> Result<EnsembleWeights> {
    for (name, s) in scores {
        if !(0.0..=1.0).contains(s) {
            return Err(Error::invalid(format!("score of {name} must lie in [0, 1], got {s}")));
        }
    }
    let kept: Vec<(String, f64)> = scores
        .iter()
        .map(|(n, s)| (n.clone(), if *s < floor { 0.0 } else { *s }))
        .collect();
    if kept.iter().all(|(_, s)| *s == 0.0) {
        return Err(Error::invalid("all model scores are zero"));
    }
    EnsembleWeights::new(kept)
}

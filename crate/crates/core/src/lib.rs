//! Subtype-adaptive post-processing toolkit for multi-class 3D tumor segmentations.
//!
//! The crate covers everything downstream of network inference:
//!
//! * [`volume`]: geometric volumes, NIfTI-1 I/O and isotropic resampling.
//! * [`morphology`]: connected components, dilation and small-component removal.
//! * [`radiomics`]: shape and first-order intensity features of the largest lesion.
//! * [`subtype`]: standardization, PCA and k-means subtype model.
//! * [`fusion`]: weighted probability ensembling and label decoding.
//! * [`postproc`]: per-subtype threshold policies (fit and apply).
//! * [`metrics`]: Dice, HD95 and their lesion-wise variants, dataset reports.
//! * [`config`]: task presets tying the pieces together.
//!
//! All volumes use the x-fastest linear layout `x + nx * (y + ny * z)`.

pub mod config;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod morphology;
pub mod postproc;
pub mod radiomics;
pub mod stats;
pub mod subtype;
pub mod volume;

pub use error::{Error, Result};

//! Geometric 3D volumes.
//!
//! Every grid in the crate carries a [`Geometry`] and stores voxels in the
//! x-fastest layout `x + nx * (y + ny * z)`.

mod nifti;
mod resample;

pub use nifti::{read_labels, read_mask, read_volume, write_labels, write_volume};
pub use resample::{resample_isotropic, Interpolation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthonormality check of direction matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Tolerance used when comparing the geometry of two grids.
pub const GEOMETRY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// mm per voxel along each grid axis.
    pub spacing: [f64; 3],
    /// Physical position (mm) of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
    /// Row-major 3x3 matrix; column `j` is the unit direction of grid axis `j`.
    pub direction: [[f64; 3]; 3],
}

impl Geometry {
    /// Axis-aligned geometry with unit direction and zero origin.
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin: [0.0; 3],
            direction: IDENTITY,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_direction(mut self, direction: [[f64; 3]; 3]) -> Result<Self> {
        self.direction = direction;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("non-positive dims {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry("non-finite origin".into()));
        }
        let d = &self.direction;
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|r| d[r][a] * d[r][b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Geometry(format!(
                        "direction matrix is not orthonormal (columns {a},{b}: {dot})"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    /// Volume of one voxel in mm³.
    #[inline]
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Physical position (mm) of a continuous voxel index.
    pub fn index_to_physical(&self, idx: [f64; 3]) -> [f64; 3] {
        let mut p = self.origin;
        for (r, pr) in p.iter_mut().enumerate() {
            for c in 0..3 {
                *pr += self.direction[r][c] * self.spacing[c] * idx[c];
            }
        }
        p
    }

    /// Continuous voxel index of a physical position (mm).
    pub fn physical_to_index(&self, p: [f64; 3]) -> [f64; 3] {
        let rel = [
            p[0] - self.origin[0],
            p[1] - self.origin[1],
            p[2] - self.origin[2],
        ];
        let mut idx = [0.0; 3];
        for (c, ic) in idx.iter_mut().enumerate() {
            // direction is orthonormal, so its inverse is the transpose
            let proj: f64 = (0..3).map(|r| self.direction[r][c] * rel[r]).sum();
            *ic = proj / self.spacing[c];
        }
        idx
    }

    /// 4x4 voxel-to-world affine (row-major).
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = self.direction[r][c] * self.spacing[c];
            }
            a[r][3] = self.origin[r];
        }
        a[3][3] = 1.0;
        a
    }

    /// Decompose a voxel-to-world affine into spacing, direction and origin.
    /// Shear (non-orthogonal columns) is rejected.
    pub fn from_affine(dims: [usize; 3], affine: &[[f64; 4]; 4]) -> Result<Self> {
        let mut spacing = [0.0; 3];
        let mut direction = [[0.0; 3]; 3];
        for c in 0..3 {
            let norm = (0..3).map(|r| affine[r][c].powi(2)).sum::<f64>().sqrt();
            if !(norm > 1e-12) || !norm.is_finite() {
                return Err(Error::Geometry("non-invertible affine".into()));
            }
            spacing[c] = norm;
            for r in 0..3 {
                direction[r][c] = affine[r][c] / norm;
            }
        }
        let g = Geometry {
            dims,
            spacing,
            origin: [affine[0][3], affine[1][3], affine[2][3]],
            direction,
        };
        g.validate()?;
        Ok(g)
    }

    /// Same grid up to [`GEOMETRY_TOL`].
    pub fn aligned_with(&self, other: &Geometry) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= GEOMETRY_TOL;
        self.dims == other.dims
            && (0..3).all(|i| close(self.spacing[i], other.spacing[i]))
            && (0..3).all(|i| close(self.origin[i], other.origin[i]))
            && (0..3).all(|r| (0..3).all(|c| close(self.direction[r][c], other.direction[r][c])))
    }

    pub fn ensure_aligned(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.aligned_with(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }

    pub fn is_isotropic(&self, target: f64) -> bool {
        self.spacing.iter().all(|&s| (s - target).abs() <= 1e-9)
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    I16,
    F32,
}

impl DType {
    pub(crate) fn nifti_code(self) -> i16 {
        match self {
            DType::U8 => 2,
            DType::I16 => 4,
            DType::F32 => 16,
        }
    }

    pub(crate) fn bits(self) -> i16 {
        match self {
            DType::U8 => 8,
            DType::I16 => 16,
            DType::F32 => 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VoxelData::U8(_) => DType::U8,
            VoxelData::I16(_) => DType::I16,
            VoxelData::F32(_) => DType::F32,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            VoxelData::U8(v) => v[i] as f64,
            VoxelData::I16(v) => v[i] as f64,
            VoxelData::F32(v) => v[i] as f64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Scalar image on a geometric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: VoxelData,
}

impl Volume {
    pub fn new(geometry: Geometry, data: VoxelData) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Volume { geometry, data })
    }

    pub fn from_f32(geometry: Geometry, data: Vec<f32>) -> Result<Self> {
        Self::new(geometry, VoxelData::F32(data))
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.data.get(i)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.to_f64()
    }
}

/// Binary grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geometry: Geometry,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Mask { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        let n = geometry.len();
        Mask {
            geometry,
            data: vec![false; n],
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let data = (0..geometry.len()).map(|i| f(geometry.coords(i))).collect();
        Mask { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<bool> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground volume in mm³.
    pub fn volume_mm3(&self) -> f64 {
        self.count() as f64 * self.geometry.voxel_volume()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Mask {
            geometry: self.geometry.clone(),
            data,
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect();
        Mask {
            geometry: self.geometry.clone(),
            data,
        }
    }

    /// Bounding box `(lo, hi)` inclusive, or `None` when empty.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        bounding_box(&self.geometry, self.data.iter().map(|&b| b))
    }
}

pub(crate) fn bounding_box(
    geometry: &Geometry,
    fg: impl Iterator<Item = bool>,
) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, b) in fg.enumerate() {
        if b {
            any = true;
            let c = geometry.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    any.then_some((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub id: u8,
    pub name: String,
}

/// Ordered label alphabet of a task. Id 0 is reserved for background.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet(Vec<Label>);

impl Alphabet {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if l.id == 0 {
                return Err(Error::invalid(format!("label '{}' uses reserved id 0", l.name)));
            }
            if !seen.insert(l.id) {
                return Err(Error::invalid(format!("duplicate label id {}", l.id)));
            }
        }
        Ok(Alphabet(labels))
    }

    pub fn from_pairs(pairs: &[(u8, &str)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(id, name)| Label {
                    id,
                    name: name.to_string(),
                })
                .collect(),
        )
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().map(|l| l.id)
    }

    pub fn contains(&self, id: u8) -> bool {
        id == 0 || self.0.iter().any(|l| l.id == id)
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        if name == "background" {
            return Some(0);
        }
        self.0.iter().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn name_of(&self, id: u8) -> Option<&str> {
        if id == 0 {
            return Some("background");
        }
        self.0.iter().find(|l| l.id == id).map(|l| l.name.as_str())
    }
}

/// Integer label map over a task alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: Geometry,
    data: Vec<u8>,
    alphabet: Alphabet,
}

impl LabelVolume {
    pub fn new(geometry: Geometry, data: Vec<u8>, alphabet: Alphabet) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "label data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        let mut present = [false; 256];
        for &v in &data {
            present[v as usize] = true;
        }
        for (v, _) in present.iter().enumerate().filter(|(_, &p)| p) {
            if !alphabet.contains(v as u8) {
                return Err(Error::invalid(format!("voxel value {v} not in label alphabet")));
            }
        }
        Ok(LabelVolume {
            geometry,
            data,
            alphabet,
        })
    }

    /// Interpret an integer-valued scalar volume as labels.
    pub fn from_volume(volume: &Volume, alphabet: Alphabet) -> Result<Self> {
        let n = volume.geometry().len();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let v = volume.get(i);
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::invalid(format!("voxel value {v} is not a valid label")));
            }
            data.push(v as u8);
        }
        Self::new(volume.geometry().clone(), data, alphabet)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Replace the voxel data, keeping geometry and alphabet.
    pub fn with_data(&self, data: Vec<u8>) -> Result<Self> {
        Self::new(self.geometry.clone(), data, self.alphabet.clone())
    }

    pub fn mask_of(&self, label: u8) -> Mask {
        Mask {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&v| v == label).collect(),
        }
    }

    pub fn foreground(&self) -> Mask {
        Mask {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&v| v != 0).collect(),
        }
    }

    pub fn count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            geometry: self.geometry.clone(),
            data: VoxelData::U8(self.data.clone()),
        }
    }

    pub(crate) fn from_parts_unchecked(geometry: Geometry, data: Vec<u8>, alphabet: Alphabet) -> Self {
        LabelVolume {
            geometry,
            data,
            alphabet,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_is_x_fastest() {
        let g = Geometry::new([3, 4, 5], [1.0; 3]).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        let sheared = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Geometry::new([1, 1, 1], [1.0; 3])
            .unwrap()
            .with_direction(sheared)
            .is_err());
    }

    #[test]
    fn affine_round_trip() {
        let rot = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let g = Geometry::new([4, 5, 6], [0.5, 0.75, 2.0])
            .unwrap()
            .with_origin([-10.0, 3.0, 7.5])
            .with_direction(rot)
            .unwrap();
        let back = Geometry::from_affine(g.dims, &g.affine()).unwrap();
        assert!(g.aligned_with(&back));
        let p = g.index_to_physical([1.0, 2.0, 3.0]);
        let idx = g.physical_to_index(p);
        for a in 0..3 {
            assert!((idx[a] - [1.0, 2.0, 3.0][a]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_column_affine_is_rejected() {
        let mut a = Geometry::new([2, 2, 2], [1.0; 3]).unwrap().affine();
        a[0][1] = 0.0;
        a[1][1] = 0.0;
        a[2][1] = 0.0;
        let err = Geometry::from_affine([2, 2, 2], &a).unwrap_err();
        assert!(err.to_string().contains("non-invertible affine"));
    }

    #[test]
    fn label_volume_rejects_unknown_values() {
        let g = Geometry::new([2, 1, 1], [1.0; 3]).unwrap();
        let abc = Alphabet::from_pairs(&[(1, "ET")]).unwrap();
        assert!(LabelVolume::new(g.clone(), vec![0, 1], abc.clone()).is_ok());
        assert!(LabelVolume::new(g, vec![0, 2], abc).is_err());
    }
}

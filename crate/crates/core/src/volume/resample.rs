//! Isotropic resampling with clamp-to-edge borders.
//!
//! The output grid keeps origin and direction; output voxel `i` along axis
//! `a` sits at continuous input index `i * target / spacing[a]`.

use serde::{Deserialize, Serialize};

use super::{Geometry, LabelVolume, Mask, Volume, VoxelData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

struct AxisSamples {
    /// lower neighbour, upper neighbour, weight of upper
    taps: Vec<(usize, usize, f64)>,
    nearest: Vec<usize>,
}

fn axis_samples(n_in: usize, spacing: f64, target: f64, n_out: usize) -> AxisSamples {
    let last = (n_in - 1) as f64;
    let mut taps = Vec::with_capacity(n_out);
    let mut nearest = Vec::with_capacity(n_out);
    let step = target / spacing;
    for i in 0..n_out {
        let p = (i as f64 * step).clamp(0.0, last);
        let lo = p.floor();
        let w = p - lo;
        let lo = lo as usize;
        taps.push((lo, (lo + 1).min(n_in - 1), w));
        nearest.push(((p + 0.5).floor() as usize).min(n_in - 1));
    }
    AxisSamples { taps, nearest }
}

fn output_geometry(g: &Geometry, target: f64) -> Result<(Geometry, [AxisSamples; 3])> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("resampling target must be positive, got {target}")));
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = ((g.dims[a] as f64 * g.spacing[a] / target).round() as usize).max(1);
    }
    let out = Geometry {
        dims,
        spacing: [target; 3],
        origin: g.origin,
        direction: g.direction,
    };
    let samples = [0, 1, 2].map(|a| axis_samples(g.dims[a], g.spacing[a], target, dims[a]));
    Ok((out, samples))
}

fn gather_nearest<T: Copy>(g: &Geometry, data: &[T], target: f64) -> Result<(Geometry, Vec<T>)> {
    let (out, s) = output_geometry(g, target)?;
    let mut v = Vec::with_capacity(out.len());
    for z in 0..out.dims[2] {
        let zi = s[2].nearest[z];
        for y in 0..out.dims[1] {
            let yi = s[1].nearest[y];
            let row = g.index(0, yi, zi);
            for x in 0..out.dims[0] {
                v.push(data[row + s[0].nearest[x]]);
            }
        }
    }
    Ok((out, v))
}

fn trilinear(g: &Geometry, data: &VoxelData, target: f64) -> Result<(Geometry, Vec<f32>)> {
    let (out, s) = output_geometry(g, target)?;
    let mut v = Vec::with_capacity(out.len());
    for z in 0..out.dims[2] {
        let (z0, z1, wz) = s[2].taps[z];
        for y in 0..out.dims[1] {
            let (y0, y1, wy) = s[1].taps[y];
            for x in 0..out.dims[0] {
                let (x0, x1, wx) = s[0].taps[x];
                let at = |xx, yy, zz| data.get(g.index(xx, yy, zz));
                let c00 = at(x0, y0, z0) * (1.0 - wx) + at(x1, y0, z0) * wx;
                let c10 = at(x0, y1, z0) * (1.0 - wx) + at(x1, y1, z0) * wx;
                let c01 = at(x0, y0, z1) * (1.0 - wx) + at(x1, y0, z1) * wx;
                let c11 = at(x0, y1, z1) * (1.0 - wx) + at(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                v.push((c0 * (1.0 - wz) + c1 * wz) as f32);
            }
        }
    }
    Ok((out, v))
}

/// Resample onto an isotropic grid of `target` mm.
///
/// Nearest mode keeps the input dtype; trilinear mode produces float32.
pub fn resample_isotropic(volume: &Volume, target: f64, mode: Interpolation) -> Result<Volume> {
    let g = volume.geometry();
    match mode {
        Interpolation::Nearest => {
            let data = match volume.data() {
                VoxelData::U8(d) => {
                    let (og, v) = gather_nearest(g, d, target)?;
                    return Volume::new(og, VoxelData::U8(v));
                }
                VoxelData::I16(d) => {
                    let (og, v) = gather_nearest(g, d, target)?;
                    return Volume::new(og, VoxelData::I16(v));
                }
                VoxelData::F32(d) => gather_nearest(g, d, target)?,
            };
            Volume::new(data.0, VoxelData::F32(data.1))
        }
        Interpolation::Trilinear => {
            let (og, v) = trilinear(g, volume.data(), target)?;
            Volume::new(og, VoxelData::F32(v))
        }
    }
}

impl LabelVolume {
    /// Nearest-neighbour isotropic resampling; labels are never blended.
    pub fn resample_isotropic(&self, target: f64) -> Result<LabelVolume> {
        let (og, v) = gather_nearest(self.geometry(), self.data(), target)?;
        Ok(LabelVolume::from_parts_unchecked(og, v, self.alphabet().clone()))
    }
}

impl Mask {
    pub fn resample_isotropic(&self, target: f64) -> Result<Mask> {
        let (og, v) = gather_nearest(self.geometry(), self.data(), target)?;
        Mask::new(og, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Volume {
        Volume::from_f32(Geometry::new(dims, spacing).unwrap(), data).unwrap()
    }

    #[test]
    fn identity_when_already_at_target() {
        let data: Vec<f32> = (0..60).map(|i| (i * 7 % 13) as f32).collect();
        let v = vol([3, 4, 5], [1.0; 3], data.clone());
        for mode in [Interpolation::Nearest, Interpolation::Trilinear] {
            let r = resample_isotropic(&v, 1.0, mode).unwrap();
            assert_eq!(r.geometry().dims, [3, 4, 5]);
            assert_eq!(r.data(), &VoxelData::F32(data.clone()));
        }
    }

    #[test]
    fn output_dims_follow_rounding_formula() {
        let v = vol([10, 10, 10], [2.0; 3], vec![0.0; 1000]);
        let r = resample_isotropic(&v, 1.0, Interpolation::Trilinear).unwrap();
        assert_eq!(r.geometry().dims, [20, 20, 20]);
        assert_eq!(r.geometry().spacing, [1.0; 3]);

        let v = vol([7, 3, 1], [0.9375, 1.0, 0.1], vec![0.0; 21]);
        let r = resample_isotropic(&v, 1.0, Interpolation::Nearest).unwrap();
        // 6.5625 -> 7, 3 -> 3, 0.1 -> 0 -> clamped to 1
        assert_eq!(r.geometry().dims, [7, 3, 1]);
    }

    #[test]
    fn trilinear_midpoint_of_a_ramp() {
        // values {0, 10} along x; halving the spacing puts sample 1 midway
        let v = vol([2, 1, 1], [1.0; 3], vec![0.0, 10.0]);
        let r = resample_isotropic(&v, 0.5, Interpolation::Trilinear).unwrap();
        assert_eq!(r.geometry().dims, [4, 2, 2]);
        let out = r.to_f64();
        assert_eq!(out[1], 5.0);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[2], 10.0);
        // clamp-to-edge past the last input voxel
        assert_eq!(out[3], 10.0);
    }

    #[test]
    fn non_positive_target_is_an_error() {
        let v = vol([1, 1, 1], [1.0; 3], vec![1.0]);
        assert!(resample_isotropic(&v, 0.0, Interpolation::Nearest).is_err());
        assert!(resample_isotropic(&v, -1.0, Interpolation::Trilinear).is_err());
    }
}

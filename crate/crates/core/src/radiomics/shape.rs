use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Mask;

pub const SHAPE_FEATURES: [&str; 14] = [
    "voxel_volume",
    "surface_area",
    "surface_volume_ratio",
    "sphericity",
    "max_3d_diameter",
    "max_2d_diameter_slice",
    "max_2d_diameter_column",
    "max_2d_diameter_row",
    "major_axis_length",
    "minor_axis_length",
    "least_axis_length",
    "elongation",
    "flatness",
    "compactness",
];

/// Eigenvalues below this fraction of the largest are treated as zero, so
/// planar and linear masks get exactly zero minor/least axes.
const EIGEN_FLOOR: f64 = 1e-12;

/// The 14 shape features of a (single-component) mask, in canonical order.
///
/// Surface area counts exposed voxel faces. Diameters are maximal distances
/// between voxel centers: in 3D, and in the projections that drop z (slice),
/// x (column) and y (row). Axis lengths are `4 * sqrt(eigenvalue)` of the
/// population covariance of voxel-center coordinates.
pub fn shape_features(mask: &Mask) -> Result<Vec<(&'static str, f64)>> {
    let g = mask.geometry();
    let s = g.spacing;
    let fg = mask.data();
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let volume = n as f64 * g.voxel_volume();

    let [nx, ny, nz] = g.dims;
    let mut faces = [0usize; 3];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = g.index(x, y, z);
                if !fg[i] {
                    continue;
                }
                faces[0] += (x == 0 || !fg[i - 1]) as usize + (x + 1 == nx || !fg[i + 1]) as usize;
                faces[1] += (y == 0 || !fg[i - nx]) as usize + (y + 1 == ny || !fg[i + nx]) as usize;
                faces[2] += (z == 0 || !fg[i - nx * ny]) as usize + (z + 1 == nz || !fg[i + nx * ny]) as usize;
            }
        }
    }
    let area = faces[0] as f64 * s[1] * s[2] + faces[1] as f64 * s[0] * s[2] + faces[2] as f64 * s[0] * s[1];

    let points: Vec<[usize; 3]> = (0..fg.len()).filter(|&i| fg[i]).map(|i| g.coords(i)).collect();
    let d3 = diameter_3d(&points, g.dims, s);
    let d_slice = diameter_projected(&points, g.dims, s, [0, 1]);
    let d_column = diameter_projected(&points, g.dims, s, [1, 2]);
    let d_row = diameter_projected(&points, g.dims, s, [0, 2]);

    let [l1, l2, l3] = covariance_eigenvalues(&points, s);
    let (elongation, flatness) = if l1 > 0.0 {
        ((l2 / l1).sqrt(), (l3 / l1).sqrt())
    } else {
        (0.0, 0.0)
    };
    let pi = std::f64::consts::PI;
    Ok(vec![
        ("voxel_volume", volume),
        ("surface_area", area),
        ("surface_volume_ratio", area / volume),
        ("sphericity", (36.0 * pi * volume * volume).cbrt() / area),
        ("max_3d_diameter", d3),
        ("max_2d_diameter_slice", d_slice),
        ("max_2d_diameter_column", d_column),
        ("max_2d_diameter_row", d_row),
        ("major_axis_length", 4.0 * l1.sqrt()),
        ("minor_axis_length", 4.0 * l2.sqrt()),
        ("least_axis_length", 4.0 * l3.sqrt()),
        ("elongation", elongation),
        ("flatness", flatness),
        ("compactness", volume / (pi.sqrt() * area.powf(1.5))),
    ])
}

/// Descending, floored eigenvalues of the physical-coordinate covariance.
fn covariance_eigenvalues(points: &[[usize; 3]], s: [f64; 3]) -> [f64; 3] {
    let n = points.len() as f64;
    // index-space moments: integer sums keep axis-aligned degeneracies exact
    let mut sum = [0u64; 3];
    for p in points {
        for a in 0..3 {
            sum[a] += p[a] as u64;
        }
    }
    let mean = sum.map(|v| v as f64 / n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = [p[0] as f64 - mean[0], p[1] as f64 - mean[1], p[2] as f64 - mean[2]];
        for r in 0..3 {
            for c in r..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            let v = cov[(r, c)] / n * s[r] * s[c];
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let top = ev[0].max(0.0);
    for e in ev.iter_mut() {
        if *e <= EIGEN_FLOOR * top {
            *e = 0.0;
        }
    }
    [ev[0], ev[1], ev[2]]
}

/// Max distance over the candidate set, brute force in parallel.
fn max_pairwise<const D: usize>(pts: &[[usize; D]], s: [f64; D]) -> f64 {
    pts.par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = 0.0f64;
            for q in &pts[i + 1..] {
                let mut d2 = 0.0;
                for a in 0..D {
                    let d = (p[a] as f64 - q[a] as f64) * s[a];
                    d2 += d * d;
                }
                best = best.max(d2);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// The farthest pair is a pair of convex-hull vertices, and a hull vertex is
/// never strictly inside a grid line of the set: keep only points that are
/// the first or last set voxel along every axis line through them.
fn diameter_3d(points: &[[usize; 3]], dims: [usize; 3], s: [f64; 3]) -> f64 {
    let [nx, ny, nz] = dims;
    let mut xr = vec![(usize::MAX, 0usize); ny * nz];
    let mut yr = vec![(usize::MAX, 0usize); nx * nz];
    let mut zr = vec![(usize::MAX, 0usize); nx * ny];
    let upd = |r: &mut (usize, usize), v: usize| {
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
    };
    for &[x, y, z] in points {
        upd(&mut xr[y + ny * z], x);
        upd(&mut yr[x + nx * z], y);
        upd(&mut zr[x + nx * y], z);
    }
    let ends = |r: (usize, usize), v: usize| v == r.0 || v == r.1;
    let cand: Vec<[usize; 3]> = points
        .iter()
        .copied()
        .filter(|&[x, y, z]| ends(xr[y + ny * z], x) && ends(yr[x + nx * z], y) && ends(zr[x + nx * y], z))
        .collect();
    max_pairwise(&cand, s)
}

/// Diameter of the projection onto the two axes in `keep`.
fn diameter_projected(points: &[[usize; 3]], dims: [usize; 3], s: [f64; 3], keep: [usize; 2]) -> f64 {
    let (na, nb) = (dims[keep[0]], dims[keep[1]]);
    let mut occ = vec![false; na * nb];
    for p in points {
        occ[p[keep[0]] + na * p[keep[1]]] = true;
    }
    let mut ar = vec![(usize::MAX, 0usize); nb];
    let mut br = vec![(usize::MAX, 0usize); na];
    for b in 0..nb {
        for a in 0..na {
            if occ[a + na * b] {
                ar[b] = (ar[b].0.min(a), ar[b].1.max(a));
                br[a] = (br[a].0.min(b), br[a].1.max(b));
            }
        }
    }
    let mut cand = Vec::new();
    for b in 0..nb {
        for a in 0..na {
            if occ[a + na * b] && (a == ar[b].0 || a == ar[b].1) && (b == br[a].0 || b == br[a].1) {
                cand.push([a, b]);
            }
        }
    }
    max_pairwise(&cand, [s[keep[0]], s[keep[1]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn get(f: &[(&str, f64)], name: &str) -> f64 {
        f.iter().find(|(n, _)| *n == name).unwrap().1
    }

    #[test]
    fn unit_voxel() {
        let g = Geometry::new([3, 3, 3], [1.0; 3]).unwrap();
        let m = Mask::from_fn(g, |c| c == [1, 1, 1]);
        let f = shape_features(&m).unwrap();
        assert_eq!(f.len(), 14);
        assert_eq!(get(&f, "voxel_volume"), 1.0);
        assert_eq!(get(&f, "surface_area"), 6.0);
        assert_eq!(get(&f, "max_3d_diameter"), 0.0);
        assert_eq!(get(&f, "major_axis_length"), 0.0);
        assert_eq!(get(&f, "elongation"), 0.0);
    }

    #[test]
    fn two_voxel_bar() {
        let g = Geometry::new([4, 3, 3], [1.0; 3]).unwrap();
        let m = Mask::from_fn(g, |[x, y, z]| (x == 1 || x == 2) && y == 1 && z == 1);
        let f = shape_features(&m).unwrap();
        assert_eq!(get(&f, "voxel_volume"), 2.0);
        assert_eq!(get(&f, "surface_area"), 10.0);
        assert_eq!(get(&f, "max_3d_diameter"), 1.0);
        assert_eq!(get(&f, "max_2d_diameter_slice"), 1.0);
        assert_eq!(get(&f, "max_2d_diameter_column"), 0.0);
        // variance of {0, 1} is 1/4, so the major axis is 4 * 0.5
        assert_eq!(get(&f, "major_axis_length"), 2.0);
        assert_eq!(get(&f, "minor_axis_length"), 0.0);
        assert_eq!(get(&f, "least_axis_length"), 0.0);
    }

    #[test]
    fn anisotropic_spacing_scales_faces() {
        let g = Geometry::new([3, 3, 3], [0.5, 1.0, 2.0]).unwrap();
        let m = Mask::from_fn(g, |c| c == [1, 1, 1]);
        let f = shape_features(&m).unwrap();
        assert_eq!(get(&f, "voxel_volume"), 1.0);
        assert_eq!(get(&f, "surface_area"), 2.0 * (2.0 + 1.0 + 0.5));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = Geometry::new([2, 2, 2], [1.0; 3]).unwrap();
        assert!(shape_features(&Mask::empty(g)).is_err());
    }
}

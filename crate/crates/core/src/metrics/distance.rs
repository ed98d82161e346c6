use crate::stats::percentile;

/// Grid-level Dice; two empty grids score 1.
pub(crate) fn dice_grid(a: &[bool], b: &[bool]) -> f64 {
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Foreground voxels with at least one background face neighbour. Voxels on
/// the grid border always count as boundary.
pub(crate) fn surface_grid(dims: [usize; 3], fg: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let sy = nx;
    let sz = nx * ny;
    let mut out = vec![false; fg.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + sy * y + sz * z;
                if !fg[i] {
                    continue;
                }
                out[i] = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !fg[i - 1]
                    || !fg[i + 1]
                    || !fg[i - sy]
                    || !fg[i + sy]
                    || !fg[i - sz]
                    || !fg[i + sz];
            }
        }
    }
    out
}

/// Copy of the sub-box `lo..=hi` of a grid.
pub(crate) fn crop<T: Copy>(dims: [usize; 3], data: &[T], lo: [usize; 3], hi: [usize; 3]) -> ([usize; 3], Vec<T>) {
    let cd = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let mut out = Vec::with_capacity(cd[0] * cd[1] * cd[2]);
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            let row = lo[0] + dims[0] * (y + dims[1] * z);
            out.extend_from_slice(&data[row..row + cd[0]]);
        }
    }
    (cd, out)
}

/// Grow a box by `margin` voxels, clipped to the grid.
pub(crate) fn expand(lo: [usize; 3], hi: [usize; 3], margin: usize, dims: [usize; 3]) -> ([usize; 3], [usize; 3]) {
    (
        [0, 1, 2].map(|a| lo[a].saturating_sub(margin)),
        [0, 1, 2].map(|a| (hi[a] + margin).min(dims[a] - 1)),
    )
}

pub(crate) fn grid_bbox(dims: [usize; 3], fg: &[bool]) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0; 3];
    let mut any = false;
    let [nx, ny, _] = dims;
    for (i, &b) in fg.iter().enumerate() {
        if b {
            any = true;
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    any.then_some((lo, hi))
}

/// Lower envelope of parabolas along one line (Felzenszwalb and
/// Huttenlocher). `f` holds squared distances, infinite where unknown.
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn run(&mut self, f: &[f64], w: f64, out: &mut [f64]) {
        self.v.clear();
        self.z.clear();
        for q in 0..f.len() {
            if !f[q].is_finite() {
                continue;
            }
            let xq = q as f64 * w;
            while let Some(&p) = self.v.last() {
                let xp = p as f64 * w;
                let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                if s <= *self.z.last().unwrap() {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(s);
                    break;
                }
            }
            if self.v.is_empty() {
                self.v.push(q);
                self.z.push(f64::NEG_INFINITY);
            }
        }
        if self.v.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let eval = |q: usize, p: usize| {
            let d = (q as f64 - p as f64) * w;
            d * d + f[p]
        };
        let mut j = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let xq = q as f64 * w;
            while j + 1 < self.v.len() && self.z[j + 1] < xq {
                j += 1;
            }
            let mut best = eval(q, self.v[j]);
            // guard against rounding in the breakpoint comparison
            if j + 1 < self.v.len() {
                best = best.min(eval(q, self.v[j + 1]));
            }
            if j > 0 {
                best = best.min(eval(q, self.v[j - 1]));
            }
            *o = best;
        }
    }
}

/// Exact squared Euclidean distance (physical units) to the nearest seed.
pub(crate) fn sq_distance_transform(dims: [usize; 3], seeds: &[bool], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut env = Envelope {
        v: Vec::new(),
        z: Vec::new(),
    };
    for axis in 0..3 {
        let n = dims[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for b in 0..dims[o2] {
            for a in 0..dims[o1] {
                let base = a * strides[o1] + b * strides[o2];
                for (k, l) in line.iter_mut().enumerate() {
                    *l = d[base + k * strides[axis]];
                }
                env.run(&line, spacing[axis], &mut out);
                for (k, o) in out.iter().enumerate() {
                    d[base + k * strides[axis]] = *o;
                }
            }
        }
    }
    d
}

/// Pooled 95th-percentile symmetric surface distance. Two empty grids give 0
/// and a single empty grid gives `penalty`.
pub(crate) fn hd95_grid(dims: [usize; 3], spacing: [f64; 3], a: &[bool], b: &[bool], penalty: f64) -> f64 {
    let ba = grid_bbox(dims, a);
    let bb = grid_bbox(dims, b);
    let ((la, ha), (lb, hb)) = match (ba, bb) {
        (None, None) => return 0.0,
        (None, _) | (_, None) => return penalty,
        (Some(x), Some(y)) => (x, y),
    };
    let lo = [0, 1, 2].map(|k| la[k].min(lb[k]));
    let hi = [0, 1, 2].map(|k| ha[k].max(hb[k]));
    // one voxel of margin keeps the grid-border rule of the boundary test
    let (lo, hi) = expand(lo, hi, 1, dims);
    let (cd, ca) = crop(dims, a, lo, hi);
    let (_, cb) = crop(dims, b, lo, hi);
    let sa = surface_grid(cd, &ca);
    let sb = surface_grid(cd, &cb);
    let da = sq_distance_transform(cd, &sa, spacing);
    let db = sq_distance_transform(cd, &sb, spacing);
    let mut pooled = Vec::new();
    for i in 0..sa.len() {
        if sa[i] {
            pooled.push(db[i].sqrt());
        }
        if sb[i] {
            pooled.push(da[i].sqrt());
        }
    }
    percentile(&pooled, 95.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_cases() {
        let a = [true, true, true, true, false, false];
        let b = [false, false, true, true, true, true];
        assert_eq!(dice_grid(&a, &b), 0.5);
        assert_eq!(dice_grid(&a, &a), 1.0);
        assert_eq!(dice_grid(&[false; 3], &[false; 3]), 1.0);
        assert_eq!(dice_grid(&[true, false], &[false, true]), 0.0);
    }

    #[test]
    fn two_points_three_apart() {
        let dims = [8, 3, 3];
        let mut a = vec![false; 72];
        let mut b = vec![false; 72];
        a[1 + 8 * (1 + 3)] = true;
        b[4 + 8 * (1 + 3)] = true;
        assert_eq!(hd95_grid(dims, [1.0; 3], &a, &b, 374.0), 3.0);
        assert_eq!(hd95_grid(dims, [2.0; 3], &a, &b, 374.0), 6.0);
        assert_eq!(hd95_grid(dims, [1.0; 3], &a, &a, 374.0), 0.0);
        assert_eq!(hd95_grid(dims, [1.0; 3], &a, &[false; 72], 374.0), 374.0);
        assert_eq!(hd95_grid(dims, [1.0; 3], &[false; 72], &[false; 72], 374.0), 0.0);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let dims = [5, 4, 3];
        let s = [0.5, 1.0, 2.5];
        let seeds: Vec<bool> = (0..60).map(|i| i % 17 == 3 || i == 41).collect();
        let d = sq_distance_transform(dims, &seeds, s);
        for i in 0..60 {
            let c = [i % 5, (i / 5) % 4, i / 20];
            let mut best = f64::INFINITY;
            for j in (0..60).filter(|&j| seeds[j]) {
                let e = [j % 5, (j / 5) % 4, j / 20];
                let mut t = 0.0;
                for k in 0..3 {
                    let v = (c[k] as f64 - e[k] as f64) * s[k];
                    t += v * v;
                }
                best = best.min(t);
            }
            assert_eq!(d[i], best, "voxel {i}");
        }
    }

    #[test]
    fn border_voxels_are_surface() {
        let s = surface_grid([3, 3, 3], &[true; 27]);
        assert_eq!(s.iter().filter(|&&b| b).count(), 26);
        assert!(!s[13]);
    }
}

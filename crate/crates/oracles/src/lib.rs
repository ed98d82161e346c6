//! Straight-line reference implementations for the test suites.
//!
//! Nothing here shares code with `subseg-core`; every routine follows the
//! textbook definition as directly as possible, trading speed for obviousness.
//! Grids are `(dims, &[bool])` in x-fastest order.

pub mod fixtures;
pub mod rng;

use std::collections::VecDeque;

pub type Dims = [usize; 3];

pub fn coords(dims: Dims, i: usize) -> [i64; 3] {
    [
        (i % dims[0]) as i64,
        ((i / dims[0]) % dims[1]) as i64,
        (i / (dims[0] * dims[1])) as i64,
    ]
}

pub fn index(dims: Dims, c: [i64; 3]) -> Option<usize> {
    if (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < dims[a]) {
        Some(c[0] as usize + dims[0] * (c[1] as usize + dims[1] * c[2] as usize))
    } else {
        None
    }
}

/// Whether offset `d` is a neighbour under connectivity 6, 18 or 26.
pub fn is_neighbour(d: [i64; 3], connectivity: u8) -> bool {
    let linf = d.iter().map(|v| v.abs()).max().unwrap();
    let nonzero = d.iter().filter(|&&v| v != 0).count();
    if linf != 1 {
        return false;
    }
    match connectivity {
        6 => nonzero == 1,
        18 => nonzero <= 2,
        26 => true,
        _ => panic!("bad connectivity"),
    }
}

/// Breadth-first flood fill. Returns per-voxel component ids (0 = background)
/// and the number of components, ids in order of discovery.
pub fn flood_fill(dims: Dims, fg: &[bool], connectivity: u8) -> (Vec<u32>, usize) {
    let mut ids = vec![0u32; fg.len()];
    let mut next = 0u32;
    for start in 0..fg.len() {
        if !fg[start] || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let c = coords(dims, i);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let d = [dx, dy, dz];
                        if !is_neighbour(d, connectivity) {
                            continue;
                        }
                        if let Some(j) = index(dims, [c[0] + dx, c[1] + dy, c[2] + dz]) {
                            if fg[j] && ids[j] == 0 {
                                ids[j] = next;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
    }
    (ids, next as usize)
}

/// True when two labelings induce the same partition of the foreground.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab: HashMap<u32, u32> = HashMap::new();
    let mut ba: HashMap<u32, u32> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Dilation by distance: a voxel is set when some foreground voxel lies within
/// the `radius`-fold Minkowski power of the connectivity's structuring element.
pub fn dilate(dims: Dims, fg: &[bool], radius: i64, connectivity: u8) -> Vec<bool> {
    let within = |d: [i64; 3]| {
        let linf = d.iter().map(|v| v.abs()).max().unwrap();
        let l1: i64 = d.iter().map(|v| v.abs()).sum();
        match connectivity {
            6 => l1 <= radius,
            18 => linf <= radius && l1 <= 2 * radius,
            26 => linf <= radius,
            _ => panic!("bad connectivity"),
        }
    };
    let on: Vec<[i64; 3]> = (0..fg.len()).filter(|&i| fg[i]).map(|i| coords(dims, i)).collect();
    (0..fg.len())
        .map(|i| {
            let c = coords(dims, i);
            on.iter().any(|p| within([c[0] - p[0], c[1] - p[1], c[2] - p[2]]))
        })
        .collect()
}

/// Linear-interpolation percentile (numpy default) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let na = a.iter().filter(|&&x| x).count();
    let nb = b.iter().filter(|&&x| x).count();
    let both = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Foreground voxels with a background (or out-of-grid) face neighbour.
pub fn surface_points(dims: Dims, fg: &[bool]) -> Vec<[i64; 3]> {
    let faces = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
    (0..fg.len())
        .filter(|&i| fg[i])
        .map(|i| coords(dims, i))
        .filter(|c| {
            faces.iter().any(|f| match index(dims, [c[0] + f[0], c[1] + f[1], c[2] + f[2]]) {
                Some(j) => !fg[j],
                None => true,
            })
        })
        .collect()
}

pub const HD_PENALTY: f64 = 374.0;

/// 95th percentile of pooled directed surface distances, all pairs.
pub fn hd95(dims: Dims, a: &[bool], b: &[bool], spacing: [f64; 3]) -> f64 {
    let ea = !a.iter().any(|&x| x);
    let eb = !b.iter().any(|&x| x);
    if ea && eb {
        return 0.0;
    }
    if ea || eb {
        return HD_PENALTY;
    }
    let sa = surface_points(dims, a);
    let sb = surface_points(dims, b);
    let dist = |p: &[i64; 3], q: &[i64; 3]| {
        (0..3)
            .map(|k| ((p[k] - q[k]) as f64 * spacing[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut pooled = Vec::with_capacity(sa.len() + sb.len());
    for p in &sa {
        pooled.push(sb.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min));
    }
    for q in &sb {
        pooled.push(sa.iter().map(|p| dist(p, q)).fold(f64::INFINITY, f64::min));
    }
    percentile(&pooled, 95.0)
}

/// Lesion-wise (Dice, HD95) following the matching procedure step by step.
pub fn lesionwise(
    dims: Dims,
    pred: &[bool],
    gt: &[bool],
    spacing: [f64; 3],
    radius: i64,
    connectivity: u8,
) -> (f64, f64) {
    let (gt_ids, n_gt) = flood_fill(dims, gt, connectivity);
    let (pred_ids, n_pred) = flood_fill(dims, pred, connectivity);
    if n_gt == 0 && n_pred == 0 {
        return (1.0, 0.0);
    }
    let mut pred_matched = vec![false; n_pred + 1];
    let mut dice_sum = 0.0;
    let mut hd_sum = 0.0;
    let mut fn_count = 0usize;
    for lesion in 1..=n_gt as u32 {
        let lesion_mask: Vec<bool> = gt_ids.iter().map(|&v| v == lesion).collect();
        let dilated = dilate(dims, &lesion_mask, radius, connectivity);
        let mut hits = vec![false; n_pred + 1];
        for i in 0..pred.len() {
            if dilated[i] && pred_ids[i] != 0 {
                hits[pred_ids[i] as usize] = true;
            }
        }
        if !hits.iter().any(|&h| h) {
            fn_count += 1;
            continue;
        }
        for (p, &h) in hits.iter().enumerate() {
            if h {
                pred_matched[p] = true;
            }
        }
        let union: Vec<bool> = pred_ids.iter().map(|&p| p != 0 && hits[p as usize]).collect();
        dice_sum += dice(&lesion_mask, &union);
        hd_sum += hd95(dims, &lesion_mask, &union, spacing);
    }
    let fp = (1..=n_pred).filter(|&p| !pred_matched[p]).count();
    let denom = (n_gt + fp) as f64;
    (
        dice_sum / denom,
        (hd_sum + HD_PENALTY * (fp + fn_count) as f64) / denom,
    )
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// The 14 shape values in canonical order, from the direct definitions.
pub fn shape_features(dims: Dims, fg: &[bool], spacing: [f64; 3]) -> Vec<(&'static str, f64)> {
    let pts: Vec<[i64; 3]> = (0..fg.len()).filter(|&i| fg[i]).map(|i| coords(dims, i)).collect();
    assert!(!pts.is_empty());
    let n = pts.len() as f64;
    let vv = spacing[0] * spacing[1] * spacing[2];
    let volume = n * vv;

    let face_area = [spacing[1] * spacing[2], spacing[0] * spacing[2], spacing[0] * spacing[1]];
    let mut area = 0.0;
    for p in &pts {
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let mut q = *p;
                q[axis] += step;
                let exposed = match index(dims, q) {
                    Some(j) => !fg[j],
                    None => true,
                };
                if exposed {
                    area += face_area[axis];
                }
            }
        }
    }

    let phys = |p: &[i64; 3]| [p[0] as f64 * spacing[0], p[1] as f64 * spacing[1], p[2] as f64 * spacing[2]];
    let mut d3 = 0.0f64;
    let mut d_slice = 0.0f64; // drop z
    let mut d_column = 0.0f64; // drop x
    let mut d_row = 0.0f64; // drop y
    for (i, p) in pts.iter().enumerate() {
        let a = phys(p);
        for q in &pts[i + 1..] {
            let b = phys(q);
            let dx = (a[0] - b[0]).powi(2);
            let dy = (a[1] - b[1]).powi(2);
            let dz = (a[2] - b[2]).powi(2);
            d3 = d3.max((dx + dy + dz).sqrt());
            d_slice = d_slice.max((dx + dy).sqrt());
            d_column = d_column.max((dy + dz).sqrt());
            d_row = d_row.max((dx + dz).sqrt());
        }
    }

    let mut mean = [0.0; 3];
    for p in &pts {
        let a = phys(p);
        for k in 0..3 {
            mean[k] += a[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = vec![vec![0.0; 3]; 3];
    for p in &pts {
        let a = phys(p);
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (a[r] - mean[r]) * (a[c] - mean[c]);
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let mut ev = jacobi_eigenvalues(cov);
    let top = ev[0].max(0.0);
    for e in ev.iter_mut() {
        if *e <= 1e-12 * top {
            *e = 0.0;
        }
    }
    let (l1, l2, l3) = (ev[0], ev[1], ev[2]);
    let (elong, flat) = if l1 > 0.0 {
        ((l2 / l1).sqrt(), (l3 / l1).sqrt())
    } else {
        (0.0, 0.0)
    };
    let pi = std::f64::consts::PI;
    vec![
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
        ("elongation", elong),
        ("flatness", flat),
        ("compactness", volume / (pi.sqrt() * area.powf(1.5))),
    ]
}

/// The 19 first-order values in canonical order.
pub fn firstorder_features(values: &[f64], voxel_volume: f64, bin_width: f64) -> Vec<(&'static str, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let energy: f64 = values.iter().map(|v| v * v).sum();
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let (skew, kurt) = if m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    let p10 = percentile(values, 10.0);
    let p25 = percentile(values, 25.0);
    let p75 = percentile(values, 75.0);
    let p90 = percentile(values, 90.0);
    let median = percentile(values, 50.0);
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let robust: Vec<f64> = values.iter().cloned().filter(|&v| v >= p10 && v <= p90).collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64;

    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for v in values {
        *counts.entry(((v - min) / bin_width).floor() as i64).or_default() += 1;
    }
    let mut entropy = 0.0;
    let mut uniformity = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        entropy -= p * p.log2();
        uniformity += p * p;
    }
    vec![
        ("energy", energy),
        ("total_energy", energy * voxel_volume),
        ("entropy", entropy),
        ("minimum", min),
        ("p10", p10),
        ("p90", p90),
        ("maximum", max),
        ("mean", mean),
        ("median", median),
        ("interquartile_range", p75 - p25),
        ("range", max - min),
        ("mean_absolute_deviation", mad),
        ("robust_mad", rmad),
        ("rms", (energy / n).sqrt()),
        ("standard_deviation", m2.sqrt()),
        ("skewness", skew),
        ("kurtosis", kurt),
        ("variance", m2),
        ("uniformity", uniformity),
    ]
}

/// Minimum within-cluster sum of squares over every assignment of points to
/// `k` non-empty clusters.
pub fn kmeans_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut assign = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % k;
            c /= k;
        }
        let mut sse = 0.0;
        let mut ok = true;
        for cl in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == cl).map(|(p, _)| p).collect();
            if members.is_empty() {
                ok = false;
                break;
            }
            let d = members[0].len();
            for j in 0..d {
                let m = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                sse += members.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>();
            }
        }
        if ok && sse < best {
            best = sse;
        }
    }
    best
}

/// Mean silhouette from the definition.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..points.len() {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            continue;
        }
        let a = (0..points.len())
            .filter(|&j| j != i && labels[j] == own)
            .map(|j| dist(&points[i], &points[j]))
            .sum::<f64>()
            / (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for other in 0..k {
            if other == own {
                continue;
            }
            let members: Vec<usize> = (0..points.len()).filter(|&j| labels[j] == other).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / members.len() as f64;
            b = b.min(m);
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_numpy_convention() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.5);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert!((percentile(&v, 10.0) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn jacobi_on_diagonal_and_rank_one() {
        let ev = jacobi_eigenvalues(vec![vec![2.0, 0.0], vec![0.0, 5.0]]);
        assert_eq!(ev, vec![5.0, 2.0]);
        let ev = jacobi_eigenvalues(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!((ev[0] - 2.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
    }

    #[test]
    fn flood_fill_counts() {
        let dims = [3, 1, 1];
        let (_, n) = flood_fill(dims, &[true, false, true], 26);
        assert_eq!(n, 2);
    }
}

//! Synthetic datasets with planted structure.

use crate::rng::SplitMix64;

/// `n` points in `features` dimensions drawn from `g` blobs whose centers are
/// the vertices of a regular simplex (edge length sqrt 2). Each point is its
/// center plus a perturbation of norm at most `radius` inside the simplex's
/// affine span, so the data has intrinsic dimension `g - 1`. The span is then
/// mapped into feature space by a random linear map with per-feature scales
/// and offsets. Returns rows and the planted blob of each row (round-robin).
pub fn blob_dataset(g: usize, n: usize, features: usize, radius: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let map: Vec<Vec<f64>> = (0..features).map(|_| (0..g).map(|_| rng.normal()).collect()).collect();
    let scale: Vec<f64> = (0..features).map(|_| 10f64.powf(rng.range(-1.0, 3.0))).collect();
    let offset: Vec<f64> = (0..features).map(|_| rng.range(-100.0, 100.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut blobs = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % g;
        let mut p = vec![0.0; g];
        p[b] = 1.0;
        // perturbation inside the sum-zero hyperplane
        let mut d: Vec<f64> = (0..g).map(|_| rng.normal()).collect();
        let m = d.iter().sum::<f64>() / g as f64;
        d.iter_mut().for_each(|v| *v -= m);
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let len = if g > 1 { radius * rng.uniform().powf(1.0 / (g - 1) as f64) } else { 0.0 };
        if norm > 0.0 {
            for (pv, dv) in p.iter_mut().zip(&d) {
                *pv += dv / norm * len;
            }
        }
        let row = (0..features)
            .map(|f| offset[f] + scale[f] * map[f].iter().zip(&p).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        rows.push(row);
        blobs.push(b);
    }
    (rows, blobs)
}

/// True when two labelings induce the same partition.
pub fn same_clustering(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

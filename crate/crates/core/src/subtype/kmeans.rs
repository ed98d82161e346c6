//! Lloyd's k-means with k-means++ seeding and single-point refinement, and
//! silhouette-based selection of k.
//!
//! Randomness comes from a ChaCha8 stream seeded with the caller's seed, so a
//! given `(data, k, seed)` always yields bit-identical centroids.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest objective wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            seed: 20240,
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Nearest-centroid index of every point under the final centroids.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares of the final assignment.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each assignment step of the winning run.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the smaller index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // rounding can leave `chosen` on a zero-weight tail point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut assign = Vec::with_capacity(points.len());
        let mut cost = Vec::with_capacity(points.len());
        for p in points {
            let (c, d) = nearest(p, &centroids);
            assign.push(c);
            cost.push(d);
        }
        let objective: f64 = cost.iter().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                objective <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means objective increased: {prev} -> {objective}"
            );
        }
        trace.push(objective);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();
        // an empty cluster takes over the worst-served point
        for c in 0..k {
            if counts[c] == 0 {
                let mut worst = 0;
                for i in 1..points.len() {
                    if cost[i] > cost[worst] {
                        worst = i;
                    }
                }
                next[c] = points[worst].clone();
                cost[worst] = 0.0;
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            break;
        }
    }
    hartigan(points, &mut centroids, &mut trace, cfg.max_iter);
    let mut assignments = Vec::with_capacity(points.len());
    let mut objective = 0.0;
    for p in points {
        let (c, d) = nearest(p, &centroids);
        assignments.push(c);
        objective += d;
    }
    KMeansFit {
        centroids,
        assignments,
        objective,
        iterations,
        objective_trace: trace,
    }
}

/// Single-point moves: a point leaves cluster `a` for `b` when
/// `n_b / (n_b + 1) * d(x, c_b) < n_a / (n_a - 1) * d(x, c_a)`, which strictly
/// lowers the objective.
fn hartigan(points: &[Vec<f64>], centroids: &mut [Vec<f64>], trace: &mut Vec<f64>, max_sweeps: usize) {
    let k = centroids.len();
    if k < 2 {
        return;
    }
    let dim = points[0].len();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, centroids).0).collect();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &c) in points.iter().zip(&assign) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    if counts.contains(&0) {
        return;
    }
    let mean = |s: &[f64], n: usize| s.iter().map(|v| v / n as f64).collect::<Vec<f64>>();
    let mut means: Vec<Vec<f64>> = (0..k).map(|c| mean(&sums[c], counts[c])).collect();
    for _ in 0..max_sweeps {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = assign[i];
            if counts[a] == 1 {
                continue;
            }
            let na = counts[a] as f64;
            let leave = na / (na - 1.0) * sq_dist(p, &means[a]);
            let mut best = (a, leave);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let join = nb / (nb + 1.0) * sq_dist(p, &means[b]);
                if join < best.1 {
                    best = (b, join);
                }
            }
            let b = best.0;
            if b == a || best.1 >= leave * (1.0 - 1e-12) {
                continue;
            }
            for (j, v) in p.iter().enumerate() {
                sums[a][j] -= v;
                sums[b][j] += v;
            }
            counts[a] -= 1;
            counts[b] += 1;
            means[a] = mean(&sums[a], counts[a]);
            means[b] = mean(&sums[b], counts[b]);
            assign[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
        let objective: f64 = points.iter().zip(&assign).map(|(p, &c)| sq_dist(p, &means[c])).sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(objective <= prev + 1e-9 * prev.abs().max(1.0));
        }
        trace.push(objective);
    }
    for (c, m) in centroids.iter_mut().zip(means) {
        *c = m;
    }
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the number of points ({n})")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Schema("ragged point set".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "only {} distinct points for k = {k}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..cfg.n_init.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let fit = lloyd(points, init, cfg);
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
pub fn silhouette_mean(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let n = points.len();
    if assignments.len() != n {
        return Err(Error::invalid("assignment count differs from point count"));
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::invalid("silhouette needs at least two non-empty clusters"));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    /// Silhouette per candidate k, ascending k.
    pub scores: Vec<(usize, f64)>,
    pub fit: KMeansFit,
}

/// Grid search over `k_range`: fit each k with the same seed and keep the
/// best mean silhouette (ties go to the smaller k).
pub fn select_k(points: &[Vec<f64>], k_range: RangeInclusive<usize>, cfg: &KMeansConfig) -> Result<KSelection> {
    let n = points.len();
    if k_range.is_empty() {
        return Err(Error::invalid("empty k range"));
    }
    if *k_range.start() < 2 || *k_range.end() + 1 > n {
        return Err(Error::invalid(format!(
            "k range {}..={} must lie within [2, {}]",
            k_range.start(),
            k_range.end(),
            n.saturating_sub(1)
        )));
    }
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64, KMeansFit)> = None;
    for k in k_range {
        let fit = kmeans_fit(points, k, cfg)?;
        let score = silhouette_mean(points, &fit.assignments)?;
        scores.push((k, score));
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((k, score, fit));
        }
    }
    let (k, _, fit) = best.expect("non-empty range");
    Ok(KSelection { k, scores, fit })
}

//! Seeded k-means: k-means++ initialization followed by Lloyd iterations.
//! Fully deterministic for a given seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::chapter::euclidean;
use crate::error::Error;
use crate::Result;

/// Lloyd stops when no centroid moves at least this far.
const SHIFT_TOL: f64 = 1e-6;
/// Hard cap on Lloyd iterations.
const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    /// Lloyd iterations actually run.
    pub iterations: usize,
}

/// k-means++ seeding: first centroid uniform, then squared-distance-weighted
/// draws. When every remaining point coincides with a chosen centroid the
/// lowest-index unchosen point is taken.
pub fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    debug_assert!(k >= 1 && k <= points.len());
    let n = points.len();
    let mut chosen_idx = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &points[chosen_idx[0]]))
        .collect();
    while chosen_idx.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            (0..n)
                .find(|i| !chosen_idx.contains(i))
                .expect("k <= n leaves an unchosen point")
        };
        chosen_idx.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &points[next]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen_idx.into_iter().map(|i| points[i].clone()).collect()
}

/// Clusters `points` into `k` groups. Ties in the nearest-centroid step go
/// to the lower cluster index; a cluster that loses all points keeps its
/// previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::input("kmeans needs at least one point"));
    }
    if k == 0 {
        return Err(Error::input("kmeans needs at least one cluster"));
    }
    if k > points.len() {
        return Err(Error::input(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite coordinate in point {i}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let assignments = assign(points, &centroids);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for ci in 0..k {
            if counts[ci] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[ci].iter().map(|s| s / counts[ci] as f64).collect();
            shift = shift.max(euclidean(&mean, &centroids[ci]));
            centroids[ci] = mean;
        }
        if shift < SHIFT_TOL {
            break;
        }
    }
    let assignments = assign(points, &centroids);
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            best
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

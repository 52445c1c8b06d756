//! Isolation forest anomaly scores. Scores live in (0, 1]; points that
//! isolate in few random splits score high. Deterministic for a given seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::Result;

/// Euler-Mascheroni constant, for the harmonic-number approximation.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationForestParams {
    pub trees: usize,
    /// Per-tree sample size; clamped to the number of points.
    pub subsample: usize,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        IsolationForestParams {
            trees: 100,
            subsample: 256,
        }
    }
}

enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Average path length of an unsuccessful BST search over `n` points; the
/// normalizer from the isolation-forest formulation.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let nf = n as f64;
            let harmonic = (nf - 1.0).ln() + EULER_GAMMA;
            2.0 * harmonic - 2.0 * (nf - 1.0) / nf
        }
    }
}

/// Anomaly score per point: `2^(-E[path] / c(psi))` over `params.trees`
/// random trees, each grown on `min(params.subsample, n)` points sampled
/// without replacement, with height capped at `ceil(log2(psi))`.
pub fn iforest_scores(
    points: &[Vec<f64>],
    params: &IsolationForestParams,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::input("isolation forest needs at least two points"));
    }
    if params.trees == 0 || params.subsample == 0 {
        return Err(Error::input("isolation forest needs trees and subsample >= 1"));
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

    let psi = params.subsample.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let sample = rand::seq::index::sample(&mut rng, n, psi).into_vec();
        trees.push(grow(points, &sample, 0, height_limit, &mut rng));
    }

    let c_psi = average_path_length(psi);
    debug_assert!(c_psi > 0.0, "psi >= 2 keeps the normalizer positive");
    Ok(points
        .iter()
        .map(|p| {
            let total: f64 = trees.iter().map(|t| path_length(t, p, 0)).sum();
            let mean = total / params.trees as f64;
            2.0_f64.powf(-mean / c_psi)
        })
        .collect())
}

fn grow(
    points: &[Vec<f64>],
    idx: &[usize],
    depth: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    if depth >= limit || idx.len() <= 1 {
        return Node::Leaf { size: idx.len() };
    }
    let dim = points[0].len();
    // Only features with spread can split; identical points become a leaf.
    let splittable: Vec<usize> = (0..dim)
        .filter(|&f| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in idx {
                lo = lo.min(points[i][f]);
                hi = hi.max(points[i][f]);
            }
            hi > lo
        })
        .collect();
    if splittable.is_empty() {
        return Node::Leaf { size: idx.len() };
    }
    let feature = splittable[rng.gen_range(0..splittable.len())];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in idx {
        lo = lo.min(points[i][feature]);
        hi = hi.max(points[i][feature]);
    }
    let mut threshold = lo + rng.gen::<f64>() * (hi - lo);
    if !(threshold > lo && threshold < hi) {
        threshold = lo + (hi - lo) / 2.0;
        if !(threshold > lo && threshold < hi) {
            return Node::Leaf { size: idx.len() };
        }
    }
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| points[i][feature] < threshold);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(points, &left, depth + 1, limit, rng)),
        right: Box::new(grow(points, &right, depth + 1, limit, rng)),
    }
}

fn path_length(node: &Node, p: &[f64], depth: usize) -> f64 {
    match node {
        Node::Leaf { size } => depth as f64 + average_path_length(*size),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if p[*feature] < *threshold {
                path_length(left, p, depth + 1)
            } else {
                path_length(right, p, depth + 1)
            }
        }
    }
}

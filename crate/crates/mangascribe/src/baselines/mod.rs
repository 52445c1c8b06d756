//! Unconstrained naming baselines: cluster the chapter's crop embeddings,
//! then match cluster centroids to bank characters with Hungarian matching.
//! Two variants: plain k-means with one spare cluster for "other", and an
//! isolation-forest prefilter that sends anomalous crops to "other" before
//! clustering the rest.

pub mod hungarian;
pub mod iforest;
pub mod kmeans;

use std::collections::BTreeMap;

pub use hungarian::{hungarian, matching_cost};
pub use iforest::{average_path_length, iforest_scores, IsolationForestParams};
pub use kmeans::{kmeans, kmeans_pp_init, KMeansResult};

use crate::bank::CharacterBank;
use crate::chapter::{l2_norm, Chapter};
use crate::error::Error;
use crate::Result;

/// Result of the isolation-forest naming baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct NamingOutcome {
    pub names: BTreeMap<String, String>,
    /// True when too few inliers survived the filter and the plain k-means
    /// baseline answered instead.
    pub fell_back: bool,
}

/// Names every crop by k-means with `k + 1` clusters: centroids are matched
/// one-to-one against the bank representatives and the one unmatched
/// cluster becomes "other". Needs at least `k + 1` crops.
pub fn name_by_kmeans(
    chapter: &Chapter,
    bank: &CharacterBank,
    seed: u64,
) -> Result<BTreeMap<String, String>> {
    let k = bank.len();
    if k == 0 {
        return Err(Error::input("naming needs a non-empty bank"));
    }
    let crops = chapter.crops();
    if crops.len() < k + 1 {
        return Err(Error::input(format!(
            "k-means naming needs at least {} crops, got {}",
            k + 1,
            crops.len()
        )));
    }
    let points: Vec<Vec<f64>> = crops
        .iter()
        .map(|c| c.embedding.as_slice().to_vec())
        .collect();
    let km = kmeans(&points, k + 1, seed)?;
    let cluster_names = centroid_names(&km.centroids, bank)?;
    Ok(crops
        .iter()
        .zip(&km.assignments)
        .map(|(c, &a)| (c.id.clone(), cluster_names[a].clone()))
        .collect())
}

/// Names crops by first marking isolation-forest anomalies (score at or
/// above `threshold`) as "other", then clustering the inliers into exactly
/// `k` groups. Falls back to [`name_by_kmeans`] when fewer than `k` inliers
/// remain.
pub fn name_by_iforest_kmeans(
    chapter: &Chapter,
    bank: &CharacterBank,
    seed: u64,
    params: &IsolationForestParams,
    threshold: f64,
) -> Result<NamingOutcome> {
    let k = bank.len();
    if k == 0 {
        return Err(Error::input("naming needs a non-empty bank"));
    }
    if !threshold.is_finite() || !(0.0..=1.0).contains(&threshold) {
        return Err(Error::input(format!(
            "anomaly threshold {threshold} out of [0, 1]"
        )));
    }
    let crops = chapter.crops();
    let points: Vec<Vec<f64>> = crops
        .iter()
        .map(|c| c.embedding.as_slice().to_vec())
        .collect();
    let scores = iforest_scores(&points, params, seed)?;
    let inliers: Vec<usize> = (0..crops.len())
        .filter(|&i| scores[i] < threshold)
        .collect();
    if inliers.len() < k {
        return Ok(NamingOutcome {
            names: name_by_kmeans(chapter, bank, seed)?,
            fell_back: true,
        });
    }
    let inlier_points: Vec<Vec<f64>> = inliers.iter().map(|&i| points[i].clone()).collect();
    let km = kmeans(&inlier_points, k, seed)?;
    let cluster_names = centroid_names(&km.centroids, bank)?;

    let mut names: BTreeMap<String, String> = crops
        .iter()
        .map(|c| (c.id.clone(), "other".to_string()))
        .collect();
    for (pos, &i) in inliers.iter().enumerate() {
        names.insert(crops[i].id.clone(), cluster_names[km.assignments[pos]].clone());
    }
    Ok(NamingOutcome {
        names,
        fell_back: false,
    })
}

/// One display name per centroid: centroids are unit-normalized (bank
/// exemplars are unit vectors), matched against the representatives, and
/// unmatched centroids become "other".
fn centroid_names(centroids: &[Vec<f64>], bank: &CharacterBank) -> Result<Vec<String>> {
    let reps = bank.representatives();
    let cost: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| {
            let mut c = c.clone();
            let n = l2_norm(&c);
            // A centroid at the origin cannot be normalized; its raw
            // distances (about 1 to every unit vector) stand.
            if n > 1e-12 {
                for v in c.iter_mut() {
                    *v /= n;
                }
            }
            reps.iter()
                .map(|r| crate::chapter::euclidean(&c, r.as_slice()))
                .collect()
        })
        .collect();
    let matching = hungarian(&cost)?;
    Ok(matching
        .into_iter()
        .map(|m| match m {
            Some(j) => bank.characters[j].name.clone(),
            None => "other".to_string(),
        })
        .collect())
}

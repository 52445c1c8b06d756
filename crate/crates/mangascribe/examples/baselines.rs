//! Pits the exact constrained solver against the two clustering baselines
//! on chapters with look-alike pairs and unknown background characters,
//! then averages naming accuracy over several seeds.
//!
//! The baselines ignore edges entirely: plain k-means with k+1 clusters,
//! and isolation-forest outlier removal followed by k-means. Look-alike
//! crops sit between two bank identities, so only the cannot-link
//! constraints can keep them apart.
//!
//! Run with `cargo run --example baselines`.

use mangascribe::baselines::{name_by_iforest_kmeans, name_by_kmeans, IsolationForestParams};
use mangascribe::constraints::{extract_constraints, CannotLinkScope};
use mangascribe::metrics::naming_accuracy;
use mangascribe::solver::{chapter_problem, solve_exact};
use mangascribe::synth::{generate_bank, generate_chapter, SynthConfig};
use mangascribe::{Result, DEFAULT_ANOMALY_THRESHOLD, DEFAULT_THETA_ML};

const SEEDS: u64 = 10;

fn main() -> Result<()> {
    let mut totals = [0.0f64; 3];
    for seed in 0..SEEDS {
        let config = SynthConfig {
            seed,
            k_bank: 4,
            embedding_dim: 8,
            pages: 3,
            noise_sigma: 0.15,
            other_rate: 0.2,
            lookalike_pairs: 2,
            ..SynthConfig::default()
        };
        let bank = generate_bank(&config)?;
        let (chapter, gt) = generate_chapter(&bank, &config)?;

        let constraints =
            extract_constraints(&chapter, DEFAULT_THETA_ML, CannotLinkScope::SamePage)?;
        let problem = chapter_problem(&chapter, &bank, &constraints)?;
        let solved = solve_exact(&problem)?.to_name_map(&bank);

        let kmeans = name_by_kmeans(&chapter, &bank, seed)?;
        let forest = name_by_iforest_kmeans(
            &chapter,
            &bank,
            seed,
            &IsolationForestParams::default(),
            DEFAULT_ANOMALY_THRESHOLD,
        )?;

        for (slot, naming) in [&solved, &forest.names, &kmeans].into_iter().enumerate() {
            totals[slot] += naming_accuracy(&gt.names, naming)?;
        }
    }

    println!("mean naming accuracy over {SEEDS} seeds:");
    for (name, total) in [
        ("exact constrained solver", totals[0]),
        ("iforest + k-means", totals[1]),
        ("k-means (k+1)", totals[2]),
    ] {
        println!("  {name:<26} {:.4}", total / SEEDS as f64);
    }
    Ok(())
}

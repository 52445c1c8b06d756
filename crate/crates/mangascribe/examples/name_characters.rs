//! Solves the constrained crop-to-character assignment on a synthetic
//! chapter and compares the result with the ground truth.
//!
//! Constraints come from per-page character-character edges: pairs scoring
//! at or above theta must share a label, crops in different same-page
//! components must not share a named label (both may still be "other").
//!
//! Run with `cargo run --example name_characters`.

use mangascribe::constraints::{extract_constraints, CannotLinkScope};
use mangascribe::solver::{chapter_problem, solve_exact, verify};
use mangascribe::synth::{generate_bank, generate_chapter, SynthConfig};
use mangascribe::{Result, DEFAULT_THETA_ML};

fn main() -> Result<()> {
    let config = SynthConfig {
        seed: 7,
        k_bank: 4,
        embedding_dim: 8,
        pages: 3,
        noise_sigma: 0.15,
        other_rate: 0.2,
        ..SynthConfig::default()
    };
    let bank = generate_bank(&config)?;
    let (chapter, gt) = generate_chapter(&bank, &config)?;

    let constraints = extract_constraints(&chapter, DEFAULT_THETA_ML, CannotLinkScope::SamePage)?;
    println!(
        "extracted {} must-links and {} cannot-links from {} crops",
        constraints.must_len(),
        constraints.cannot_len(),
        chapter.crop_ids().len()
    );

    let problem = chapter_problem(&chapter, &bank, &constraints)?;
    let assignment = solve_exact(&problem)?;
    assert!(verify(&problem, &assignment)?, "optimum satisfies its own constraints");
    println!("objective: {:.6}\n", assignment.objective);

    let naming = assignment.to_name_map(&bank);
    let mut correct = 0;
    println!("{:<8} {:<10} {:<10}", "crop", "predicted", "truth");
    for (id, predicted) in &naming {
        let truth = &gt.names[id];
        let mark = if predicted == truth {
            correct += 1;
            ' '
        } else {
            '*'
        };
        println!("{id:<8} {predicted:<10} {truth:<10}{mark}");
    }
    println!(
        "\naccuracy: {correct}/{} ({:.1}%)",
        naming.len(),
        100.0 * correct as f64 / naming.len() as f64
    );
    Ok(())
}

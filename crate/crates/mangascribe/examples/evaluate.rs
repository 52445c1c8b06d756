//! Scores a predicted naming against ground truth across several chapters
//! and prints the merged metric report.
//!
//! Here the "prediction" is the solver's own output on noisy synthetic
//! chapters, evaluated against the generator's ground truth, so every
//! metric is meaningful but none is trivially 1.0.
//!
//! Run with `cargo run --example evaluate`.

use mangascribe::constraints::{extract_constraints, CannotLinkScope};
use mangascribe::metrics::{evaluate_chapter, merge_reports, EvalInputs};
use mangascribe::solver::{chapter_problem, solve_exact};
use mangascribe::synth::{generate_bank, generate_chapter, SynthConfig};
use mangascribe::{Result, DEFAULT_IOU_MIN, DEFAULT_THETA_ML};

fn main() -> Result<()> {
    let mut reports = Vec::new();
    for seed in 0..3u64 {
        let config = SynthConfig {
            seed,
            k_bank: 3,
            embedding_dim: 8,
            pages: 3,
            noise_sigma: 0.12,
            edge_noise: 0.08,
            ..SynthConfig::default()
        };
        let bank = generate_bank(&config)?;
        let (chapter, gt) = generate_chapter(&bank, &config)?;

        let constraints =
            extract_constraints(&chapter, DEFAULT_THETA_ML, CannotLinkScope::SamePage)?;
        let problem = chapter_problem(&chapter, &bank, &constraints)?;
        let naming = solve_exact(&problem)?.to_name_map(&bank);

        reports.push(evaluate_chapter(&EvalInputs {
            gt: &chapter,
            pred: &chapter,
            gt_names: Some(&gt.names),
            gt_speakers: Some(&gt.speakers),
            naming: Some(&naming),
            iou_min: DEFAULT_IOU_MIN,
            theta_ml: DEFAULT_THETA_ML,
        })?);
    }

    let merged = merge_reports(&reports)?;
    print!("{}", merged.render_table());
    Ok(())
}

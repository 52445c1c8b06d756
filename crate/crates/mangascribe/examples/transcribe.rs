//! Full pipeline on a synthetic chapter: extract constraints, solve the
//! assignment, build the reading-ordered transcript, and print it in both
//! formats.
//!
//! Run with `cargo run --example transcribe`.

use mangascribe::constraints::{extract_constraints, CannotLinkScope};
use mangascribe::solver::{chapter_problem, solve_exact};
use mangascribe::synth::{generate_bank, generate_chapter, SynthConfig};
use mangascribe::transcript::{
    build_transcript, render_transcript, TranscriptFormat, TranscriptParams,
};
use mangascribe::{Result, DEFAULT_THETA_ML};

fn main() -> Result<()> {
    let config = SynthConfig {
        seed: 21,
        k_bank: 3,
        embedding_dim: 8,
        pages: 2,
        ..SynthConfig::default()
    };
    let bank = generate_bank(&config)?;
    let (chapter, _) = generate_chapter(&bank, &config)?;

    let constraints = extract_constraints(&chapter, DEFAULT_THETA_ML, CannotLinkScope::SamePage)?;
    let problem = chapter_problem(&chapter, &bank, &constraints)?;
    let naming = solve_exact(&problem)?.to_name_map(&bank);

    let params = TranscriptParams {
        tail_gated: true,
        ..TranscriptParams::default()
    };
    let transcript = build_transcript(&chapter, &naming, &params, "demo")?;

    println!("=== plain ===");
    print!("{}", render_transcript(&transcript, TranscriptFormat::Plain));

    println!("\n=== json (first utterance) ===");
    let json = render_transcript(&transcript, TranscriptFormat::Json);
    let value: serde_json::Value = serde_json::from_str(&json).expect("own rendering parses");
    println!(
        "{}",
        serde_json::to_string_pretty(&value["utterances"][0]).expect("utterance serializes")
    );
    Ok(())
}

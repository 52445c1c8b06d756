//! Chapter-wide manga transcript engine.
//!
//! The pipeline consumes per-page detection graphs (character crops, text
//! boxes, speech-bubble tails, panels, and scored association edges) plus a
//! bank of named characters with exemplar embeddings, and produces a named,
//! reading-ordered dialogue transcript for the whole chapter.
//!
//! The core step is a constrained assignment: every crop gets a bank
//! character or the catch-all "other" label, minimizing total embedding
//! distance subject to must-link and cannot-link constraints derived from
//! per-page character-character edges. [`solver`] solves that exactly;
//! [`baselines`] provides the unconstrained clustering alternatives
//! (k-means, isolation forest + k-means) it is compared against; [`metrics`]
//! scores all of it; [`synth`] fabricates chapters with known ground truth.
//!
//! Each module has a runnable counterpart under `examples/`. The `mangascribe`
//! binary exposes the same operations as subcommands; see [`cli`].

pub mod bank;
pub mod baselines;
pub mod chapter;
pub mod cli;
pub mod constraints;
pub mod error;
pub mod metrics;
pub mod solver;
pub mod synth;
pub mod transcript;

pub use bank::CharacterBank;
pub use chapter::Chapter;
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Cost of assigning any crop to the catch-all "other" label.
pub const DEFAULT_ETA: f64 = 0.75;
/// Character-character edge score at or above which two crops must-link.
pub const DEFAULT_THETA_ML: f64 = 0.5;
/// Essential-score threshold for a text box to enter the transcript.
pub const DEFAULT_TAU_ESSENTIAL: f64 = 0.5;
/// Best text-character score below which the speaker renders as `<unsure>`.
pub const DEFAULT_TAU_SPEAKER: f64 = 0.4;
/// Text-tail edge score at or above which a text counts as having a tail.
pub const TAIL_EDGE_THRESHOLD: f64 = 0.5;
/// IoU at or above which a predicted box may match a ground-truth box.
pub const DEFAULT_IOU_MIN: f64 = 0.5;
/// Isolation-forest anomaly score at or above which a crop is "other".
pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 0.55;

//! Command-line surface. Five subcommands: `synth` fabricates a chapter
//! with ground truth, `name` solves the constrained assignment, `baseline`
//! runs the unconstrained clustering alternatives, `transcribe` goes all the
//! way to a reading-ordered transcript, and `eval` scores predictions.
//!
//! Every subcommand accepts multiple chapters and `--jobs N` fans them
//! across worker threads; outputs are keyed by input file stem, so results
//! are byte-identical regardless of job count. Diagnostics go to stderr,
//! machine-readable results to files or stdout, and any failure exits 1
//! with a single-line message.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bank::CharacterBank;
use crate::baselines::{name_by_iforest_kmeans, name_by_kmeans, IsolationForestParams};
use crate::chapter::Chapter;
use crate::constraints::{
    extract_constraints, gt_constraints, merge_overrides, CannotLinkScope, ConstraintOverrides,
    ConstraintSet,
};
use crate::error::Error;
use crate::metrics::{evaluate_chapter, merge_reports, EvalInputs};
use crate::solver::{
    chapter_problem, naming_objective, solve_exact, Assignment, AssignmentDocument,
};
use crate::synth::{generate_bank, generate_chapter, GroundTruth, SynthConfig};
use crate::transcript::{build_transcript, render_transcript, TranscriptFormat, TranscriptParams};
use crate::{
    Result, DEFAULT_ANOMALY_THRESHOLD, DEFAULT_IOU_MIN, DEFAULT_TAU_ESSENTIAL, DEFAULT_TAU_SPEAKER,
    DEFAULT_THETA_ML,
};

#[derive(Debug, Parser)]
#[command(
    name = "mangascribe",
    version,
    about = "Chapter-wide manga transcription: assignment, reading order, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Produce named, reading-ordered transcripts for whole chapters.
    Transcribe(TranscribeArgs),
    /// Assign every character crop a bank name or "other".
    Name(NameArgs),
    /// Name crops with a clustering baseline instead of the exact solver.
    Baseline(BaselineArgs),
    /// Score predicted chapters against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic chapter, character bank, and ground truth.
    Synth(SynthArgs),
}

/// Which crop pairs may receive cannot-link constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    /// Different same-page components repel each other.
    SamePage,
    /// Only pairs sharing a panel repel each other.
    SamePanel,
}

impl From<ScopeArg> for CannotLinkScope {
    fn from(s: ScopeArg) -> CannotLinkScope {
        match s {
            ScopeArg::SamePage => CannotLinkScope::SamePage,
            ScopeArg::SamePanel => CannotLinkScope::SamePanel,
        }
    }
}

/// Flags shared by every subcommand that solves the assignment problem.
#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Character bank JSON.
    #[arg(long)]
    pub bank: PathBuf,
    /// Override the bank's cost for the "other" label.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Char-char edge score at or above which two crops must-link.
    #[arg(long, default_value_t = DEFAULT_THETA_ML)]
    pub theta_ml: f64,
    /// Which crop pairs cannot-link.
    #[arg(long, value_enum, default_value_t = ScopeArg::SamePage)]
    pub cannot_link: ScopeArg,
    /// JSON with extra must/cannot pairs merged into the extracted set.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Build constraints from ground-truth identities instead of edges.
    #[arg(long)]
    pub gt_constraints: bool,
}

impl SolveArgs {
    fn load_bank(&self) -> Result<CharacterBank> {
        let bank = CharacterBank::from_file(&self.bank)?;
        match self.eta {
            Some(eta) => CharacterBank::new(eta, bank.characters),
            None => Ok(bank),
        }
    }

    fn constraints(&self, chapter: &Chapter) -> Result<ConstraintSet> {
        let base = if self.gt_constraints {
            gt_constraints(chapter)?
        } else {
            extract_constraints(chapter, self.theta_ml, self.cannot_link.into())?
        };
        match &self.overrides {
            Some(path) => {
                let overrides = ConstraintOverrides::from_file(path)?;
                merge_overrides(chapter, &base, &overrides)
            }
            None => Ok(base),
        }
    }

    fn solve(&self, chapter: &Chapter, bank: &CharacterBank) -> Result<Assignment> {
        let constraints = self.constraints(chapter)?;
        let problem = chapter_problem(chapter, bank, &constraints)?;
        solve_exact(&problem)
    }
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    /// Chapter JSONs to transcribe.
    #[arg(required = true, num_args = 1..)]
    pub chapters: Vec<PathBuf>,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Essential score at or above which a text enters the transcript.
    #[arg(long, default_value_t = DEFAULT_TAU_ESSENTIAL)]
    pub tau_essential: f64,
    /// Speaker confidence below which the speaker renders as <unsure>.
    #[arg(long, default_value_t = DEFAULT_TAU_SPEAKER)]
    pub tau_speaker: f64,
    /// Drop the speaker line for texts without a speech-bubble tail.
    #[arg(long)]
    pub tail_gated: bool,
    /// Prefer ground-truth essential flags over scores where present.
    #[arg(long)]
    pub use_gt_essential: bool,
    /// Directory for the .transcript.txt and .transcript.json outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads used to fan out over chapters.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct NameArgs {
    /// Chapter JSONs to name.
    #[arg(required = true, num_args = 1..)]
    pub chapters: Vec<PathBuf>,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Directory for the .assignment.json outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads used to fan out over chapters.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Baseline naming method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// k-means with k+1 clusters; the unmatched centroid becomes "other".
    Kmeans,
    /// Isolation-forest outliers become "other", inliers get k-means.
    IforestKmeans,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Chapter JSONs to name.
    #[arg(required = true, num_args = 1..)]
    pub chapters: Vec<PathBuf>,
    /// Character bank JSON.
    #[arg(long)]
    pub bank: PathBuf,
    /// Override the bank's cost for the "other" label (objective only).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Kmeans)]
    pub method: MethodArg,
    /// Seed for k-means initialization and forest sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Isolation-forest tree count.
    #[arg(long, default_value_t = IsolationForestParams::default().trees)]
    pub trees: usize,
    /// Isolation-forest per-tree sample size.
    #[arg(long, default_value_t = IsolationForestParams::default().subsample)]
    pub subsample: usize,
    /// Anomaly score at or above which a crop is "other".
    #[arg(long, default_value_t = DEFAULT_ANOMALY_THRESHOLD)]
    pub threshold: f64,
    /// Directory for the .baseline.json outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads used to fan out over chapters.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth chapter JSONs.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Predicted chapter JSONs, aligned with --gt by position.
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth name/speaker/essential maps per chapter (synth output).
    #[arg(long, num_args = 1..)]
    pub gt_maps: Vec<PathBuf>,
    /// Predicted assignment documents per chapter; enables naming metrics.
    #[arg(long, num_args = 1..)]
    pub assignment: Vec<PathBuf>,
    /// IoU at or above which predicted and GT boxes may match.
    #[arg(long, default_value_t = DEFAULT_IOU_MIN)]
    pub iou_min: f64,
    /// Must-link threshold for edge-component clustering.
    #[arg(long, default_value_t = DEFAULT_THETA_ML)]
    pub theta_ml: f64,
    /// Write the merged JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads used to fan out over chapters.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Named characters in the bank.
    #[arg(long, default_value_t = 4)]
    pub characters: usize,
    /// Embedding dimensionality.
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub pages: usize,
    /// Panels per page, inclusive LO..HI.
    #[arg(long, value_parser = parse_span, default_value = "2..4")]
    pub panels: (usize, usize),
    /// Character crops per page, inclusive LO..HI.
    #[arg(long, value_parser = parse_span, default_value = "2..6")]
    pub crops: (usize, usize),
    /// Text boxes per page, inclusive LO..HI.
    #[arg(long, value_parser = parse_span, default_value = "2..5")]
    pub texts: (usize, usize),
    /// Gaussian noise added to identity embeddings.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Probability a crop depicts nobody from the bank.
    #[arg(long, default_value_t = 0.1)]
    pub other_rate: f64,
    /// Probability an edge score lands on the wrong side of 0.5.
    #[arg(long, default_value_t = 0.05)]
    pub edge_noise: f64,
    /// Probability a text is dialogue-worthy.
    #[arg(long, default_value_t = 0.7)]
    pub essential_rate: f64,
    /// Fraction of texts that get a speech-bubble tail.
    #[arg(long, default_value_t = 0.7)]
    pub tail_rate: f64,
    /// Same-panel crop pairs with blended look-alike embeddings.
    #[arg(long, default_value_t = 0)]
    pub lookalike_pairs: usize,
    /// Directory for the generated files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output files are named <prefix>.chapter.json, .bank.json, .gt.json.
    #[arg(long, default_value = "synth")]
    pub prefix: String,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            k_bank: self.characters,
            embedding_dim: self.dim,
            pages: self.pages,
            panels_per_page: self.panels,
            crops_per_page: self.crops,
            texts_per_page: self.texts,
            noise_sigma: self.sigma,
            other_rate: self.other_rate,
            edge_noise: self.edge_noise,
            essential_rate: self.essential_rate,
            tail_rate: self.tail_rate,
            lookalike_pairs: self.lookalike_pairs,
        }
    }
}

/// Parses an inclusive "LO..HI" span; a bare "N" means N..N.
fn parse_span(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("expected an integer, found {t:?}"))
    };
    match s.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::input(format!("no usable file stem in {}", path.display())))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Write {
        path: path.into(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Write {
        path: path.into(),
        source,
    })
}

/// Runs `f(0..n)` on up to `jobs` scoped threads, returning results in
/// index order; on failures the lowest-index error wins.
fn run_jobs<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs.min(n) <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}

pub fn cmd_transcribe(args: &TranscribeArgs) -> Result<()> {
    let bank = args.solve.load_bank()?;
    let params = TranscriptParams {
        tau_essential: args.tau_essential,
        tau_speaker: args.tau_speaker,
        tail_gated: args.tail_gated,
        use_gt_essential: args.use_gt_essential,
    };
    ensure_dir(&args.out_dir)?;
    let lines = run_jobs(args.chapters.len(), args.jobs, |i| {
        let path = &args.chapters[i];
        let name = stem(path)?;
        let chapter = Chapter::from_file(path)?;
        let assignment = args.solve.solve(&chapter, &bank)?;
        let naming = assignment.to_name_map(&bank);
        let transcript = build_transcript(&chapter, &naming, &params, name.clone())?;
        let txt = args.out_dir.join(format!("{name}.transcript.txt"));
        let json = args.out_dir.join(format!("{name}.transcript.json"));
        write_text(&txt, &render_transcript(&transcript, TranscriptFormat::Plain))?;
        write_text(&json, &render_transcript(&transcript, TranscriptFormat::Json))?;
        Ok(format!(
            "{name}: objective {:.6}, {} crops, {} utterances -> {}",
            assignment.objective,
            chapter.crop_ids().len(),
            transcript.utterances.len(),
            txt.display()
        ))
    })?;
    for line in lines {
        eprintln!("{line}");
    }
    Ok(())
}

pub fn cmd_name(args: &NameArgs) -> Result<()> {
    let bank = args.solve.load_bank()?;
    ensure_dir(&args.out_dir)?;
    let lines = run_jobs(args.chapters.len(), args.jobs, |i| {
        let path = &args.chapters[i];
        let name = stem(path)?;
        let chapter = Chapter::from_file(path)?;
        let assignment = args.solve.solve(&chapter, &bank)?;
        let constraints = args.solve.constraints(&chapter)?;
        let out = args.out_dir.join(format!("{name}.assignment.json"));
        AssignmentDocument::new(&assignment, &bank).write_file(&out)?;
        Ok(format!(
            "{name}: objective {:.6}, {} crops, {} must-links, {} cannot-links -> {}",
            assignment.objective,
            chapter.crop_ids().len(),
            constraints.must_len(),
            constraints.cannot_len(),
            out.display()
        ))
    })?;
    for line in lines {
        eprintln!("{line}");
    }
    Ok(())
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let bank = {
        let loaded = CharacterBank::from_file(&args.bank)?;
        match args.eta {
            Some(eta) => CharacterBank::new(eta, loaded.characters)?,
            None => loaded,
        }
    };
    let forest = IsolationForestParams {
        trees: args.trees,
        subsample: args.subsample,
    };
    ensure_dir(&args.out_dir)?;
    let lines = run_jobs(args.chapters.len(), args.jobs, |i| {
        let path = &args.chapters[i];
        let name = stem(path)?;
        let chapter = Chapter::from_file(path)?;
        let (names, note) = match args.method {
            MethodArg::Kmeans => (name_by_kmeans(&chapter, &bank, args.seed)?, ""),
            MethodArg::IforestKmeans => {
                let outcome =
                    name_by_iforest_kmeans(&chapter, &bank, args.seed, &forest, args.threshold)?;
                (
                    outcome.names,
                    if outcome.fell_back { ", fell back to plain k-means" } else { "" },
                )
            }
        };
        let objective = naming_objective(&chapter, &bank, &names)?;
        let doc = AssignmentDocument {
            assignments: names,
            objective,
        };
        let out = args.out_dir.join(format!("{name}.baseline.json"));
        doc.write_file(&out)?;
        Ok(format!(
            "{name}: objective {:.6}, {} crops{note} -> {}",
            objective,
            chapter.crop_ids().len(),
            out.display()
        ))
    })?;
    for line in lines {
        eprintln!("{line}");
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let n = args.gt.len();
    if args.pred.len() != n {
        return Err(Error::input(format!(
            "{} --gt chapters but {} --pred chapters",
            n,
            args.pred.len()
        )));
    }
    for (flag, list) in [("--gt-maps", &args.gt_maps), ("--assignment", &args.assignment)] {
        if !list.is_empty() && list.len() != n {
            return Err(Error::input(format!(
                "{flag} must appear once per chapter ({} given, {n} chapters)",
                list.len()
            )));
        }
    }
    let reports = run_jobs(n, args.jobs, |i| {
        let gt = Chapter::from_file(&args.gt[i])?;
        let pred = Chapter::from_file(&args.pred[i])?;
        let maps = match args.gt_maps.get(i) {
            Some(p) => Some(GroundTruth::from_file(p)?),
            None => None,
        };
        let naming = match args.assignment.get(i) {
            Some(p) => Some(AssignmentDocument::from_file(p)?.assignments),
            None => None,
        };
        evaluate_chapter(&EvalInputs {
            gt: &gt,
            pred: &pred,
            gt_names: maps.as_ref().map(|m| &m.names),
            gt_speakers: maps.as_ref().map(|m| &m.speakers),
            naming: naming.as_ref(),
            iou_min: args.iou_min,
            theta_ml: args.theta_ml,
        })
    })?;
    let merged = merge_reports(&reports)?;
    eprint!("{}", merged.render_table());
    match &args.out {
        Some(path) => write_text(path, &merged.to_json_string())?,
        None => print!("{}", merged.to_json_string()),
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = args.config();
    let bank = generate_bank(&config)?;
    let (chapter, gt) = generate_chapter(&bank, &config)?;
    ensure_dir(&args.out_dir)?;
    let chapter_path = args.out_dir.join(format!("{}.chapter.json", args.prefix));
    let bank_path = args.out_dir.join(format!("{}.bank.json", args.prefix));
    let gt_path = args.out_dir.join(format!("{}.gt.json", args.prefix));
    chapter.write_file(&chapter_path)?;
    bank.write_file(&bank_path)?;
    gt.write_file(&gt_path)?;
    println!("{}", chapter_path.display());
    println!("{}", bank_path.display());
    println!("{}", gt_path.display());
    Ok(())
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Transcribe(a) => cmd_transcribe(a),
        Command::Name(a) => cmd_name(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Binary entry point: parse, dispatch, one-line error on stderr, exit 1.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Synthetic chapter generator: banks, page graphs, and complete ground
//! truth, fully deterministic per seed, so every solver and metric claim is
//! testable at desk scale.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bank::{BankCharacter, CharacterBank};
use crate::chapter::{
    BoundingBox, Chapter, CharacterNode, EdgeSet, Embedding, PageGraph, PanelNode, TailNode,
    TextCategory, TextNode,
};
use crate::error::Error;
use crate::{Result, DEFAULT_ETA};

const PAGE_W: f64 = 1000.0;
const PAGE_H: f64 = 1400.0;
const PANEL_MARGIN: f64 = 10.0;
const CROP_W: f64 = 60.0;
const CROP_H: f64 = 80.0;
const TEXT_W: f64 = 140.0;
const TEXT_H: f64 = 50.0;
const TAIL_SIZE: f64 = 20.0;
/// Scores live within this span of their indicator's side of 0.5.
const JITTER_SPAN: f64 = 0.35;
/// Rejection-sampling budget for bank separation.
const MAX_BANK_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Named characters in the bank.
    pub k_bank: usize,
    pub embedding_dim: usize,
    pub pages: usize,
    /// Inclusive ranges sampled per page.
    pub panels_per_page: (usize, usize),
    pub crops_per_page: (usize, usize),
    pub texts_per_page: (usize, usize),
    /// Standard deviation of the Gaussian added to identity embeddings.
    pub noise_sigma: f64,
    /// Probability a crop depicts nobody from the bank.
    pub other_rate: f64,
    /// Probability an edge score lands on the wrong side of 0.5.
    pub edge_noise: f64,
    /// Probability a text is dialogue-worthy.
    pub essential_rate: f64,
    /// Fraction of texts that get a speech-bubble tail.
    pub tail_rate: f64,
    /// Same-panel crop pairs whose embeddings are blended to confuse
    /// unconstrained naming; needs at least two bank characters.
    pub lookalike_pairs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            k_bank: 4,
            embedding_dim: 16,
            pages: 4,
            panels_per_page: (2, 4),
            crops_per_page: (2, 6),
            texts_per_page: (2, 5),
            noise_sigma: 0.1,
            other_rate: 0.1,
            edge_noise: 0.05,
            essential_rate: 0.7,
            tail_rate: 0.7,
            lookalike_pairs: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_bank < 1 {
            return Err(Error::input("k_bank must be at least 1".to_string()));
        }
        if self.embedding_dim < 2 {
            return Err(Error::input("embedding_dim must be at least 2".to_string()));
        }
        if self.pages < 1 {
            return Err(Error::input("pages must be at least 1".to_string()));
        }
        for (name, (lo, hi)) in [
            ("panels_per_page", self.panels_per_page),
            ("crops_per_page", self.crops_per_page),
            ("texts_per_page", self.texts_per_page),
        ] {
            if lo > hi {
                return Err(Error::input(format!("{name} range {lo}..={hi} is empty")));
            }
        }
        if self.panels_per_page.0 < 1 {
            return Err(Error::input("pages need at least one panel".to_string()));
        }
        if self.panels_per_page.1 > 36 {
            return Err(Error::input(
                "panels_per_page above 36 leaves no room for crops".to_string(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::input(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.other_rate) {
            return Err(Error::input(format!(
                "other_rate must lie in [0, 1), got {}",
                self.other_rate
            )));
        }
        if !(0.0..1.0).contains(&self.edge_noise) {
            return Err(Error::input(format!(
                "edge_noise must lie in [0, 1), got {}",
                self.edge_noise
            )));
        }
        if !(self.essential_rate > 0.0 && self.essential_rate <= 1.0) {
            return Err(Error::input(format!(
                "essential_rate must lie in (0, 1], got {}",
                self.essential_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.tail_rate) {
            return Err(Error::input(format!(
                "tail_rate must lie in [0, 1], got {}",
                self.tail_rate
            )));
        }
        if self.lookalike_pairs > 0 && self.k_bank < 2 {
            return Err(Error::input(
                "lookalike_pairs needs at least two bank characters".to_string(),
            ));
        }
        Ok(())
    }
}

/// Complete ground truth for one synthetic chapter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Crop id → bank name, with every non-bank identity collapsed to "other".
    pub names: BTreeMap<String, String>,
    /// Text id → speaking crop id.
    pub speakers: BTreeMap<String, String>,
    /// Text id → dialogue-worthiness flag.
    pub essential: BTreeMap<String, bool>,
}

impl GroundTruth {
    pub fn from_file(path: &Path) -> Result<GroundTruth> {
        let data = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Draws `k_bank` unit exemplars with pairwise distance at least
/// 4·noise_sigma by rejection sampling; errors when the separation cannot
/// be met within the draw budget.
pub fn generate_bank(config: &SynthConfig) -> Result<CharacterBank> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let min_dist = 4.0 * config.noise_sigma;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(config.k_bank);
    let mut draws = 0;
    while vectors.len() < config.k_bank {
        if draws >= MAX_BANK_DRAWS {
            return Err(Error::input(format!(
                "cannot place {} bank characters at pairwise distance {:.3} in {} dimensions",
                config.k_bank, min_dist, config.embedding_dim
            )));
        }
        draws += 1;
        let cand = unit_vector(&mut rng, config.embedding_dim);
        let ok = vectors
            .iter()
            .all(|v| crate::chapter::euclidean(v, &cand) >= min_dist);
        if ok {
            vectors.push(cand);
        }
    }
    let mut characters = Vec::with_capacity(config.k_bank);
    for (i, v) in vectors.into_iter().enumerate() {
        characters.push(BankCharacter {
            name: format!("char_{i:02}"),
            exemplars: vec![Embedding::unit(v)?],
        });
    }
    CharacterBank::new(DEFAULT_ETA, characters)
}

/// A GT indicator pushed to a score: flipped across 0.5 with probability
/// `edge_noise`, then jittered within its side's outer band.
fn indicator_score(rng: &mut ChaCha8Rng, truth: bool, edge_noise: f64) -> f64 {
    let side = truth ^ rng.gen_bool(edge_noise);
    let u: f64 = rng.gen();
    if side {
        1.0 - u * JITTER_SPAN
    } else {
        u * JITTER_SPAN
    }
}

fn noisy_embedding(rng: &mut ChaCha8Rng, identity: &[f64], sigma: f64) -> Result<Embedding> {
    let v: Vec<f64> = identity
        .iter()
        .map(|&x| {
            let g: f64 = StandardNormal.sample(rng);
            x + sigma * g
        })
        .collect();
    Embedding::unit(v)
}

/// Generates a full chapter against a bank: grid panels, crops with noisy
/// identity embeddings, speaker-labeled texts with tails, indicator-derived
/// edge scores, and the matching ground truth.
pub fn generate_chapter(bank: &CharacterBank, config: &SynthConfig) -> Result<(Chapter, GroundTruth)> {
    config.validate()?;
    if bank.len() != config.k_bank {
        return Err(Error::input(format!(
            "bank holds {} characters but config expects {}",
            bank.len(),
            config.k_bank
        )));
    }
    // Decorrelate the chapter stream from the bank stream drawn off the
    // same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let representatives = bank.representatives();
    let names: Vec<String> = bank.names().into_iter().map(str::to_string).collect();

    // Look-alike pairs confuse the two closest bank identities.
    let lookalike_identity = if config.lookalike_pairs > 0 {
        let mut best = (0, 1);
        let mut best_d = f64::INFINITY;
        for i in 0..representatives.len() {
            for j in (i + 1)..representatives.len() {
                let d = crate::chapter::euclidean(
                    representatives[i].as_slice(),
                    representatives[j].as_slice(),
                );
                if d < best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        Some(best)
    } else {
        None
    };
    let mut lookalikes_on_page = vec![0usize; config.pages];
    for _ in 0..config.lookalike_pairs {
        lookalikes_on_page[rng.gen_range(0..config.pages)] += 1;
    }

    let mut gt = GroundTruth::default();
    let mut pages = Vec::with_capacity(config.pages);
    let mut unknown_counter = 0usize;

    #[allow(clippy::needless_range_loop)]
    for page_idx in 0..config.pages {
        let npanels = rng.gen_range(config.panels_per_page.0..=config.panels_per_page.1);
        let cols = (npanels as f64).sqrt().ceil() as usize;
        let rows = npanels.div_ceil(cols);
        let cell_w = PAGE_W / cols as f64;
        let cell_h = PAGE_H / rows as f64;
        let panels: Vec<PanelNode> = (0..npanels)
            .map(|j| {
                let (r, c) = (j / cols, j % cols);
                PanelNode {
                    id: format!("p{page_idx}_{j}"),
                    page: page_idx,
                    bbox: BoundingBox::new(
                        c as f64 * cell_w + PANEL_MARGIN,
                        r as f64 * cell_h + PANEL_MARGIN,
                        (c + 1) as f64 * cell_w - PANEL_MARGIN,
                        (r + 1) as f64 * cell_h - PANEL_MARGIN,
                    )
                    .expect("grid cells are non-degenerate"),
                }
            })
            .collect();

        // identity string, rendered name, embedding, owning panel
        struct Crop {
            identity: String,
            embedding: Embedding,
            panel: usize,
        }
        let place_crop = |rng: &mut ChaCha8Rng, panel: &PanelNode| {
            let x1 = rng.gen_range(panel.bbox.x1..panel.bbox.x2 - CROP_W);
            let y1 = rng.gen_range(panel.bbox.y1..panel.bbox.y2 - CROP_H);
            BoundingBox::new(x1, y1, x1 + CROP_W, y1 + CROP_H).expect("crop fits")
        };

        let ncrops = rng.gen_range(config.crops_per_page.0..=config.crops_per_page.1);
        let mut crops: Vec<(Crop, BoundingBox)> = Vec::new();
        for _ in 0..ncrops {
            let from_bank = !rng.gen_bool(config.other_rate);
            let (identity, base) = if from_bank {
                let i = rng.gen_range(0..config.k_bank);
                (names[i].clone(), representatives[i].as_slice().to_vec())
            } else {
                let v = unit_vector(&mut rng, config.embedding_dim);
                let identity = format!("unknown_{unknown_counter}");
                unknown_counter += 1;
                (identity, v)
            };
            let panel = rng.gen_range(0..npanels);
            let bbox = place_crop(&mut rng, &panels[panel]);
            let embedding = noisy_embedding(&mut rng, &base, config.noise_sigma)?;
            crops.push((
                Crop {
                    identity,
                    embedding,
                    panel,
                },
                bbox,
            ));
        }
        // Appended look-alike pairs: one clean crop of identity `a` next to
        // a crop of identity `b` whose embedding leans toward `a`, so
        // nearest-exemplar naming conflates them while the same-page
        // exclusivity constraint keeps them apart.
        if let Some((a, b)) = lookalike_identity {
            for _ in 0..lookalikes_on_page[page_idx] {
                let panel = rng.gen_range(0..npanels);
                let ea = representatives[a].as_slice();
                let eb = representatives[b].as_slice();
                let bbox1 = place_crop(&mut rng, &panels[panel]);
                let e1 = noisy_embedding(&mut rng, ea, config.noise_sigma)?;
                crops.push((
                    Crop {
                        identity: names[a].clone(),
                        embedding: e1,
                        panel,
                    },
                    bbox1,
                ));
                let mut blended: Vec<f64> =
                    ea.iter().zip(eb).map(|(x, y)| 0.6 * x + 0.4 * y).collect();
                crate::chapter::l2_normalize(&mut blended)?;
                let bbox2 = place_crop(&mut rng, &panels[panel]);
                let e2 = noisy_embedding(&mut rng, &blended, config.noise_sigma)?;
                crops.push((
                    Crop {
                        identity: names[b].clone(),
                        embedding: e2,
                        panel,
                    },
                    bbox2,
                ));
            }
        }

        let characters: Vec<CharacterNode> = crops
            .iter()
            .enumerate()
            .map(|(j, (c, bbox))| CharacterNode {
                id: format!("c{page_idx}_{j}"),
                page: page_idx,
                bbox: *bbox,
                embedding: c.embedding.clone(),
                gt_name: Some(c.identity.clone()),
            })
            .collect();
        for (node, (c, _)) in characters.iter().zip(&crops) {
            // Collapsed GT name, as naming should report it.
            let collapsed = if names.contains(&c.identity) {
                c.identity.clone()
            } else {
                "other".to_string()
            };
            gt.names.insert(node.id.clone(), collapsed);
        }

        // Texts speak for page crops; tails attach below a text's left edge.
        let ntexts = if crops.is_empty() {
            0
        } else {
            rng.gen_range(config.texts_per_page.0..=config.texts_per_page.1)
        };
        let mut texts = Vec::new();
        let mut tails = Vec::new();
        let mut tail_of: BTreeMap<String, String> = BTreeMap::new();
        for j in 0..ntexts {
            let speaker = rng.gen_range(0..crops.len());
            let essential = rng.gen_bool(config.essential_rate);
            let has_tail = rng.gen_bool(config.tail_rate);
            let panel = &panels[crops[speaker].0.panel].bbox;
            let x1 = rng.gen_range(panel.x1..panel.x2 - TEXT_W);
            let y1 = rng.gen_range(panel.y1..panel.y2 - TEXT_H - TAIL_SIZE);
            let text_id = format!("t{page_idx}_{j}");
            let essential_score = indicator_score(&mut rng, essential, config.edge_noise);
            let category = if essential {
                if rng.gen_bool(0.5) {
                    TextCategory::Conversational
                } else {
                    TextCategory::InternalThought
                }
            } else if rng.gen_bool(0.5) {
                TextCategory::ActionSound
            } else {
                TextCategory::SceneText
            };
            texts.push(TextNode {
                id: text_id.clone(),
                page: page_idx,
                bbox: BoundingBox::new(x1, y1, x1 + TEXT_W, y1 + TEXT_H).expect("text fits"),
                content: format!("line {page_idx}-{j}"),
                essential_score,
                category: Some(category),
                gt_essential: Some(essential),
            });
            if has_tail {
                let tail_id = format!("l{page_idx}_{j}");
                tails.push(TailNode {
                    id: tail_id.clone(),
                    page: page_idx,
                    bbox: BoundingBox::new(x1, y1 + TEXT_H, x1 + TAIL_SIZE, y1 + TEXT_H + TAIL_SIZE)
                        .expect("tail fits"),
                });
                tail_of.insert(text_id.clone(), tail_id);
            }
            gt.speakers
                .insert(text_id.clone(), characters[speaker].id.clone());
            gt.essential.insert(text_id, essential);
        }

        // Dense scored edges from GT indicators, in a fixed draw order.
        let mut edges = EdgeSet::default();
        for t in &texts {
            for c in &characters {
                let truth = gt.speakers[&t.id] == c.id;
                let score = indicator_score(&mut rng, truth, config.edge_noise);
                edges.text_char.insert((t.id.clone(), c.id.clone()), score);
            }
        }
        for t in &texts {
            for l in &tails {
                let truth = tail_of.get(&t.id) == Some(&l.id);
                let score = indicator_score(&mut rng, truth, config.edge_noise);
                edges.text_tail.insert((t.id.clone(), l.id.clone()), score);
            }
        }
        for i in 0..crops.len() {
            for j in (i + 1)..crops.len() {
                let truth = crops[i].0.identity == crops[j].0.identity;
                let score = indicator_score(&mut rng, truth, config.edge_noise);
                edges.char_char.insert(
                    (characters[i].id.clone(), characters[j].id.clone()),
                    score,
                );
            }
        }

        pages.push(PageGraph {
            index: page_idx as u64,
            characters,
            texts,
            tails,
            panels,
            edges,
        });
    }

    let chapter = Chapter {
        embedding_dim: config.embedding_dim,
        pages,
    };
    Ok((chapter, gt))
}

//! Transcript composition: keep the dialogue-worthy texts, order them in
//! manga reading order (right-to-left recursive XY-cut over panels), and
//! attribute each to a named speaker via the text-character edges.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chapter::{Chapter, PageGraph, PanelNode};
use crate::constraints::assign_to_panel;
use crate::error::Error;
use crate::Result;
use crate::{DEFAULT_TAU_ESSENTIAL, DEFAULT_TAU_SPEAKER, TAIL_EDGE_THRESHOLD};

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    /// Display index of the owning page.
    pub page_index: u64,
    /// Panel the text was assigned to; None on pages without panels.
    pub panel_id: Option<String>,
    pub text_id: String,
    pub content: String,
    /// Bank character name, "other", or the literal `<unsure>`.
    pub speaker: String,
    /// False when tail-gating suppressed the speaker; rendering then omits it.
    pub attributed: bool,
    /// The maximum text-character edge score behind the speaker choice.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscriptParams {
    /// Texts below this essential score are dropped.
    pub tau_essential: f64,
    /// Speaker confidence below this renders as `<unsure>`.
    pub tau_speaker: f64,
    /// When set, texts lacking a tail edge at 0.5+ lose their speaker line.
    pub tail_gated: bool,
    /// Prefer each text's ground-truth essential flag over its score when
    /// the flag is present.
    pub use_gt_essential: bool,
}

impl Default for TranscriptParams {
    fn default() -> Self {
        TranscriptParams {
            tau_essential: DEFAULT_TAU_ESSENTIAL,
            tau_speaker: DEFAULT_TAU_SPEAKER,
            tail_gated: false,
            use_gt_essential: false,
        }
    }
}

/// Reading-ordered, speaker-attributed chapter transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub chapter_id: String,
    pub params: TranscriptParams,
    /// Display indices of every chapter page, in order; rendering emits a
    /// header per page even when no utterance survives filtering.
    pub pages: Vec<u64>,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Plain,
    Json,
}

impl FromStr for TranscriptFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TranscriptFormat::Plain),
            "json" => Ok(TranscriptFormat::Json),
            other => Err(Error::input(format!(
                "unknown transcript format {other:?} (expected plain or json)"
            ))),
        }
    }
}

/// Panel reading order: recursive XY-cut, splitting on the widest full-width
/// horizontal gap first (top half before bottom), then on vertical gaps
/// (right half before left). Groups that no gap separates are ordered by
/// descending right edge, then ascending top edge, then id.
pub fn order_panels(page: &PageGraph) -> Vec<String> {
    let indices: Vec<usize> = (0..page.panels.len()).collect();
    let mut out = Vec::new();
    xy_cut(&page.panels, indices, &mut out);
    out.into_iter().map(|i| page.panels[i].id.clone()).collect()
}

fn xy_cut(panels: &[PanelNode], group: Vec<usize>, out: &mut Vec<usize>) {
    if group.len() <= 1 {
        out.extend(group);
        return;
    }
    // Horizontal cut: a y-interval no panel of the group crosses.
    if let Some((gap_start, _)) = widest_gap(
        group.iter().map(|&i| (panels[i].bbox.y1, panels[i].bbox.y2)),
        true,
    ) {
        let (top, bottom): (Vec<usize>, Vec<usize>) =
            group.into_iter().partition(|&i| panels[i].bbox.y2 <= gap_start);
        xy_cut(panels, top, out);
        xy_cut(panels, bottom, out);
        return;
    }
    // Vertical cut, right side first.
    if let Some((_, gap_end)) = widest_gap(
        group.iter().map(|&i| (panels[i].bbox.x1, panels[i].bbox.x2)),
        false,
    ) {
        let (right, left): (Vec<usize>, Vec<usize>) =
            group.into_iter().partition(|&i| panels[i].bbox.x1 >= gap_end);
        xy_cut(panels, right, out);
        xy_cut(panels, left, out);
        return;
    }
    // No gap separates the group.
    let mut leaf = group;
    leaf.sort_by(|&a, &b| {
        panels[b]
            .bbox
            .x2
            .partial_cmp(&panels[a].bbox.x2)
            .unwrap()
            .then(panels[a].bbox.y1.partial_cmp(&panels[b].bbox.y1).unwrap())
            .then(panels[a].id.cmp(&panels[b].id))
    });
    out.extend(leaf);
}

/// Widest empty interval strictly between the group's extents. Equal-width
/// ties take the topmost gap for horizontal cuts and the rightmost for
/// vertical ones.
fn widest_gap(
    spans: impl Iterator<Item = (f64, f64)>,
    prefer_low: bool,
) -> Option<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = spans.collect();
    spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, f64)> = None;
    let mut covered_to = spans[0].1;
    for &(lo, hi) in &spans[1..] {
        if lo > covered_to {
            let width = lo - covered_to;
            let better = match best {
                None => true,
                Some((s, e)) => {
                    let bw = e - s;
                    width > bw || (width == bw && !prefer_low)
                }
            };
            if better {
                best = Some((covered_to, lo));
            }
        }
        covered_to = covered_to.max(hi);
    }
    best
}

/// Text reading order: each text joins the panel overlapping it most (ties
/// to the panel earlier in reading order; no overlap falls to the nearest
/// panel center), then panels are walked in reading order with texts sorted
/// right-to-left, top-to-bottom (descending center-x, ascending center-y,
/// then id).
pub fn order_texts(page: &PageGraph, panel_order: &[String]) -> Vec<String> {
    // Panel indices in reading order; doubles as the tie-break preference.
    let preference: Vec<usize> = panel_order
        .iter()
        .filter_map(|pid| page.panels.iter().position(|p| &p.id == pid))
        .collect();
    let mut by_panel: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut unpaneled: Vec<usize> = Vec::new();
    for (ti, t) in page.texts.iter().enumerate() {
        match assign_to_panel(&t.bbox, &page.panels, &preference) {
            Some(pi) => by_panel.entry(pi).or_default().push(ti),
            None => unpaneled.push(ti),
        }
    }
    let sort_key = |group: &mut Vec<usize>| {
        group.sort_by(|&a, &b| {
            let (ax, ay) = page.texts[a].bbox.center();
            let (bx, by) = page.texts[b].bbox.center();
            bx.partial_cmp(&ax)
                .unwrap()
                .then(ay.partial_cmp(&by).unwrap())
                .then(page.texts[a].id.cmp(&page.texts[b].id))
        });
    };
    let mut ordered = Vec::with_capacity(page.texts.len());
    for &pi in &preference {
        if let Some(mut group) = by_panel.remove(&pi) {
            sort_key(&mut group);
            ordered.extend(group);
        }
    }
    sort_key(&mut unpaneled);
    ordered.extend(unpaneled);
    ordered
        .into_iter()
        .map(|ti| page.texts[ti].id.clone())
        .collect()
}

/// Builds the reading-ordered utterance list for the whole chapter.
/// `naming` must cover every crop the chapter mentions.
pub fn attribute_speakers(
    chapter: &Chapter,
    naming: &BTreeMap<String, String>,
    params: &TranscriptParams,
) -> Result<Vec<Utterance>> {
    for crop in chapter.crops() {
        if !naming.contains_key(&crop.id) {
            return Err(Error::input(format!(
                "naming map misses crop {:?}",
                crop.id
            )));
        }
    }
    let mut utterances = Vec::new();
    for page in &chapter.pages {
        let panel_order = order_panels(page);
        let text_order = order_texts(page, &panel_order);
        let preference: Vec<usize> = panel_order
            .iter()
            .filter_map(|pid| page.panels.iter().position(|p| &p.id == pid))
            .collect();
        for tid in text_order {
            let text = page.text(&tid).expect("ordered ids come from this page");
            let essential = match (params.use_gt_essential, text.gt_essential) {
                (true, Some(flag)) => flag,
                _ => text.essential_score >= params.tau_essential,
            };
            if !essential {
                continue;
            }

            // Strongest text-character edge decides the speaker; earlier
            // crops win exact ties.
            let mut confidence = 0.0;
            let mut speaker_crop: Option<&str> = None;
            for c in &page.characters {
                let s = page.edges.text_char_score(&text.id, &c.id);
                if s > confidence {
                    confidence = s;
                    speaker_crop = Some(&c.id);
                }
            }
            let speaker = match speaker_crop {
                Some(crop) if confidence >= params.tau_speaker => naming[crop].clone(),
                _ => "<unsure>".to_string(),
            };

            let attributed = if params.tail_gated {
                page.tails
                    .iter()
                    .any(|l| page.edges.text_tail_score(&text.id, &l.id) >= TAIL_EDGE_THRESHOLD)
            } else {
                true
            };

            let panel_id = assign_to_panel(&text.bbox, &page.panels, &preference)
                .map(|pi| page.panels[pi].id.clone());

            utterances.push(Utterance {
                page_index: page.index,
                panel_id,
                text_id: text.id.clone(),
                content: text.content.clone(),
                speaker,
                attributed,
                confidence,
            });
        }
    }
    Ok(utterances)
}

/// Full transcript for a chapter under the given naming.
pub fn build_transcript(
    chapter: &Chapter,
    naming: &BTreeMap<String, String>,
    params: &TranscriptParams,
    chapter_id: impl Into<String>,
) -> Result<Transcript> {
    Ok(Transcript {
        chapter_id: chapter_id.into(),
        params: *params,
        pages: chapter.pages.iter().map(|p| p.index).collect(),
        utterances: attribute_speakers(chapter, naming, params)?,
    })
}

/// Renders a transcript. Plain format: a `--- page N ---` header per page,
/// then `speaker: content` lines (content alone when unattributed). JSON
/// format: the full record. Both byte-deterministic, LF endings, trailing
/// newline.
pub fn render_transcript(transcript: &Transcript, format: TranscriptFormat) -> String {
    match format {
        TranscriptFormat::Plain => {
            let mut out = String::new();
            for &page in &transcript.pages {
                out.push_str(&format!("--- page {page} ---\n"));
                for u in transcript
                    .utterances
                    .iter()
                    .filter(|u| u.page_index == page)
                {
                    if u.attributed {
                        out.push_str(&format!("{}: {}\n", u.speaker, u.content));
                    } else {
                        out.push_str(&format!("{}\n", u.content));
                    }
                }
            }
            out
        }
        TranscriptFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(transcript).expect("transcript serializes");
            s.push('\n');
            s
        }
    }
}

//! Detection-graph data model: one JSON document per chapter, one graph per
//! page. Parsing validates every structural invariant up front so downstream
//! code can assume well-formed data: unique ids, finite unit-norm embeddings,
//! non-degenerate boxes, edges whose endpoints exist on the same page, scores
//! in [0, 1].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Axis-aligned box in pixel coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BoundingBox { x1, y1, x2, y2 };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("bbox", format!("non-finite coordinate in {b:?}")));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid("bbox", format!("degenerate box {b:?}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Area of overlap with `other`; 0.0 when disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Intersection over union, in [0, 1].
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Euclidean distance between equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale `v` to unit L2 norm. Errors on non-finite entries or (near-)zero norm.
pub fn l2_normalize(v: &mut [f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("embedding", "non-finite component"));
    }
    let n = l2_norm(v);
    if n < 1e-12 {
        return Err(Error::invalid("embedding", "zero-norm vector"));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}

/// Unit-norm embedding vector. Normalized once at construction; every
/// consumer may assume `l2_norm(e) == 1` to float precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `v` to unit length. Vectors already unit-norm pass
    /// through bit-unchanged so JSON round-trips stay exact.
    pub fn unit(mut v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding", "non-finite component"));
        }
        if (l2_norm(&v) - 1.0).abs() > 1e-9 {
            l2_normalize(&mut v)?;
        }
        Ok(Embedding(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

/// Text-box category. The flag says whether boxes of that category carry
/// dialogue the transcript should keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextCategory {
    ActionSound,
    BackgroundInfo,
    Conversational,
    EditorialNote,
    InterjectionExplicit,
    InterjectionImplicit,
    InternalThought,
    SceneText,
    Other,
}

impl TextCategory {
    /// Whether this category belongs in a dialogue transcript.
    pub fn is_essential(&self) -> bool {
        match self {
            TextCategory::BackgroundInfo
            | TextCategory::Conversational
            | TextCategory::InterjectionExplicit
            | TextCategory::InterjectionImplicit
            | TextCategory::InternalThought => true,
            TextCategory::ActionSound
            | TextCategory::EditorialNote
            | TextCategory::SceneText
            | TextCategory::Other => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterNode {
    pub id: String,
    /// Position of the owning page in `Chapter::pages`.
    pub page: usize,
    pub bbox: BoundingBox,
    pub embedding: Embedding,
    /// Ground-truth identity, present only on annotated chapters.
    pub gt_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextNode {
    pub id: String,
    pub page: usize,
    pub bbox: BoundingBox,
    pub content: String,
    /// Model confidence in [0, 1] that this text is dialogue worth keeping.
    pub essential_score: f64,
    pub category: Option<TextCategory>,
    pub gt_essential: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailNode {
    pub id: String,
    pub page: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelNode {
    pub id: String,
    pub page: usize,
    pub bbox: BoundingBox,
}

/// Scored association edges of one page. Keys are id pairs; `char_char`
/// keys are stored with the lexicographically smaller id first. A pair
/// absent from a map has score 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet {
    pub text_char: BTreeMap<(String, String), f64>,
    pub text_tail: BTreeMap<(String, String), f64>,
    pub char_char: BTreeMap<(String, String), f64>,
}

impl EdgeSet {
    pub fn text_char_score(&self, text_id: &str, char_id: &str) -> f64 {
        self.text_char
            .get(&(text_id.to_string(), char_id.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn text_tail_score(&self, text_id: &str, tail_id: &str) -> f64 {
        self.text_tail
            .get(&(text_id.to_string(), tail_id.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn char_char_score(&self, a: &str, b: &str) -> f64 {
        let key = canonical_pair(a, b);
        self.char_char.get(&key).copied().unwrap_or(0.0)
    }
}

/// Orders an unordered id pair so `(a, b)` and `(b, a)` share one key.
pub fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// One page's detection graph. Node vectors preserve input order.
#[derive(Debug, Clone, PartialEq)]
pub struct PageGraph {
    /// Display number used for page headers; unique within the chapter.
    pub index: u64,
    pub characters: Vec<CharacterNode>,
    pub texts: Vec<TextNode>,
    pub tails: Vec<TailNode>,
    pub panels: Vec<PanelNode>,
    pub edges: EdgeSet,
}

impl PageGraph {
    pub fn character(&self, id: &str) -> Option<&CharacterNode> {
        self.characters.iter().find(|c| c.id == id)
    }

    pub fn text(&self, id: &str) -> Option<&TextNode> {
        self.texts.iter().find(|t| t.id == id)
    }

    pub fn panel(&self, id: &str) -> Option<&PanelNode> {
        self.panels.iter().find(|p| p.id == id)
    }
}

/// Whole-chapter detection graph. Construct via [`Chapter::from_json_str`]
/// or [`Chapter::from_file`]; both validate.
#[derive(Debug, Clone, PartialEq)]
pub struct Chapter {
    pub embedding_dim: usize,
    pub pages: Vec<PageGraph>,
}

impl Chapter {
    pub fn from_json_str(s: &str) -> Result<Chapter> {
        let raw: raw::Chapter = serde_json::from_str(s).map_err(|source| Error::Json {
            path: "<string>".into(),
            source,
        })?;
        Chapter::from_raw(raw)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Chapter> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.into(),
            source,
        })?;
        let raw: raw::Chapter = serde_json::from_str(&body).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        Chapter::from_raw(raw)
    }

    /// Canonical JSON: nodes in stored order, edges sorted by id pair,
    /// 2-space indent, trailing newline. Byte-identical across reruns.
    pub fn to_json_string(&self) -> String {
        let raw = self.to_raw();
        let mut s = serde_json::to_string_pretty(&raw).expect("chapter serializes");
        s.push('\n');
        s
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Write {
            path: path.into(),
            source,
        })
    }

    /// All crop ids, chapter order: page by page, input order within page.
    pub fn crop_ids(&self) -> Vec<String> {
        self.pages
            .iter()
            .flat_map(|p| p.characters.iter().map(|c| c.id.clone()))
            .collect()
    }

    /// All character nodes in chapter order.
    pub fn crops(&self) -> Vec<&CharacterNode> {
        self.pages.iter().flat_map(|p| p.characters.iter()).collect()
    }

    pub fn crop(&self, id: &str) -> Option<&CharacterNode> {
        self.pages.iter().find_map(|p| p.character(id))
    }

    fn from_raw(raw: raw::Chapter) -> Result<Chapter> {
        if raw.embedding_dim == 0 {
            return Err(Error::invalid("chapter", "embedding_dim must be positive"));
        }
        let mut seen_ids: BTreeSet<String> = BTreeSet::new();
        let mut seen_pages: BTreeSet<u64> = BTreeSet::new();
        let mut claim = |id: &str| -> Result<()> {
            if !seen_ids.insert(id.to_string()) {
                return Err(Error::invalid("chapter", format!("duplicate id {id:?}")));
            }
            Ok(())
        };

        let mut pages = Vec::with_capacity(raw.pages.len());
        for (pos, rp) in raw.pages.into_iter().enumerate() {
            if !seen_pages.insert(rp.index) {
                return Err(Error::invalid(
                    "chapter",
                    format!("duplicate page index {}", rp.index),
                ));
            }

            let mut characters = Vec::with_capacity(rp.characters.len());
            for rc in rp.characters {
                claim(&rc.id)?;
                if rc.embedding.len() != raw.embedding_dim {
                    return Err(Error::DimensionMismatch {
                        expected: raw.embedding_dim,
                        found: rc.embedding.len(),
                    });
                }
                characters.push(CharacterNode {
                    bbox: bbox_from(&rc.bbox, &rc.id)?,
                    embedding: Embedding::unit(rc.embedding)?,
                    id: rc.id,
                    page: pos,
                    gt_name: rc.gt_name,
                });
            }

            let mut texts = Vec::with_capacity(rp.texts.len());
            for rt in rp.texts {
                claim(&rt.id)?;
                check_score("essential_score", rt.essential_score, &rt.id)?;
                texts.push(TextNode {
                    bbox: bbox_from(&rt.bbox, &rt.id)?,
                    id: rt.id,
                    page: pos,
                    content: rt.content,
                    essential_score: rt.essential_score,
                    category: rt.category,
                    gt_essential: rt.gt_essential,
                });
            }

            let mut tails = Vec::with_capacity(rp.tails.len());
            for rl in rp.tails {
                claim(&rl.id)?;
                tails.push(TailNode {
                    bbox: bbox_from(&rl.bbox, &rl.id)?,
                    id: rl.id,
                    page: pos,
                });
            }

            let mut panels = Vec::with_capacity(rp.panels.len());
            for rpn in rp.panels {
                claim(&rpn.id)?;
                panels.push(PanelNode {
                    bbox: bbox_from(&rpn.bbox, &rpn.id)?,
                    id: rpn.id,
                    page: pos,
                });
            }

            let text_ids: BTreeSet<&str> = texts.iter().map(|t| t.id.as_str()).collect();
            let char_ids: BTreeSet<&str> = characters.iter().map(|c| c.id.as_str()).collect();
            let tail_ids: BTreeSet<&str> = tails.iter().map(|t| t.id.as_str()).collect();

            let mut edges = EdgeSet::default();
            for (tid, cid, score) in rp.edges.text_char {
                require_endpoint(&text_ids, &tid, "text", rp.index)?;
                require_endpoint(&char_ids, &cid, "character", rp.index)?;
                check_score("edge score", score, &format!("{tid}-{cid}"))?;
                if edges.text_char.insert((tid.clone(), cid.clone()), score).is_some() {
                    return Err(Error::invalid(
                        "chapter",
                        format!("duplicate text_char edge ({tid}, {cid})"),
                    ));
                }
            }
            for (tid, lid, score) in rp.edges.text_tail {
                require_endpoint(&text_ids, &tid, "text", rp.index)?;
                require_endpoint(&tail_ids, &lid, "tail", rp.index)?;
                check_score("edge score", score, &format!("{tid}-{lid}"))?;
                if edges.text_tail.insert((tid.clone(), lid.clone()), score).is_some() {
                    return Err(Error::invalid(
                        "chapter",
                        format!("duplicate text_tail edge ({tid}, {lid})"),
                    ));
                }
            }
            for (a, b, score) in rp.edges.char_char {
                require_endpoint(&char_ids, &a, "character", rp.index)?;
                require_endpoint(&char_ids, &b, "character", rp.index)?;
                if a == b {
                    return Err(Error::invalid(
                        "chapter",
                        format!("self char_char edge on {a:?}"),
                    ));
                }
                check_score("edge score", score, &format!("{a}-{b}"))?;
                let key = canonical_pair(&a, &b);
                if edges.char_char.insert(key, score).is_some() {
                    return Err(Error::invalid(
                        "chapter",
                        format!("duplicate char_char edge ({a}, {b})"),
                    ));
                }
            }

            pages.push(PageGraph {
                index: rp.index,
                characters,
                texts,
                tails,
                panels,
                edges,
            });
        }

        Ok(Chapter {
            embedding_dim: raw.embedding_dim,
            pages,
        })
    }

    fn to_raw(&self) -> raw::Chapter {
        raw::Chapter {
            embedding_dim: self.embedding_dim,
            pages: self
                .pages
                .iter()
                .map(|p| raw::Page {
                    index: p.index,
                    characters: p
                        .characters
                        .iter()
                        .map(|c| raw::Character {
                            id: c.id.clone(),
                            bbox: bbox_to(&c.bbox),
                            embedding: c.embedding.as_slice().to_vec(),
                            gt_name: c.gt_name.clone(),
                        })
                        .collect(),
                    texts: p
                        .texts
                        .iter()
                        .map(|t| raw::Text {
                            id: t.id.clone(),
                            bbox: bbox_to(&t.bbox),
                            content: t.content.clone(),
                            essential_score: t.essential_score,
                            category: t.category,
                            gt_essential: t.gt_essential,
                        })
                        .collect(),
                    tails: p
                        .tails
                        .iter()
                        .map(|l| raw::Tail {
                            id: l.id.clone(),
                            bbox: bbox_to(&l.bbox),
                        })
                        .collect(),
                    panels: p
                        .panels
                        .iter()
                        .map(|pn| raw::Panel {
                            id: pn.id.clone(),
                            bbox: bbox_to(&pn.bbox),
                        })
                        .collect(),
                    edges: raw::Edges {
                        text_char: p
                            .edges
                            .text_char
                            .iter()
                            .map(|((t, c), s)| (t.clone(), c.clone(), *s))
                            .collect(),
                        text_tail: p
                            .edges
                            .text_tail
                            .iter()
                            .map(|((t, l), s)| (t.clone(), l.clone(), *s))
                            .collect(),
                        char_char: p
                            .edges
                            .char_char
                            .iter()
                            .map(|((a, b), s)| (a.clone(), b.clone(), *s))
                            .collect(),
                    },
                })
                .collect(),
        }
    }
}

fn bbox_from(raw: &[f64; 4], id: &str) -> Result<BoundingBox> {
    BoundingBox::new(raw[0], raw[1], raw[2], raw[3]).map_err(|e| match e {
        Error::Invalid { detail, .. } => {
            Error::invalid("chapter", format!("node {id:?}: {detail}"))
        }
        other => other,
    })
}

fn bbox_to(b: &BoundingBox) -> [f64; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

fn check_score(what: &str, value: f64, ctx: &str) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(
            "chapter",
            format!("{what} {value} out of [0, 1] on {ctx}"),
        ));
    }
    Ok(())
}

fn require_endpoint(ids: &BTreeSet<&str>, id: &str, kind: &str, page: u64) -> Result<()> {
    if !ids.contains(id) {
        return Err(Error::invalid(
            "chapter",
            format!("edge references unknown {kind} {id:?} on page {page}"),
        ));
    }
    Ok(())
}

/// File-shape mirror of the chapter schema; serde stops here, validation
/// happens in the conversion to the domain types.
mod raw {
    use super::TextCategory;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct Chapter {
        pub embedding_dim: usize,
        pub pages: Vec<Page>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Page {
        pub index: u64,
        #[serde(default)]
        pub characters: Vec<Character>,
        #[serde(default)]
        pub texts: Vec<Text>,
        #[serde(default)]
        pub tails: Vec<Tail>,
        #[serde(default)]
        pub panels: Vec<Panel>,
        #[serde(default)]
        pub edges: Edges,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Character {
        pub id: String,
        pub bbox: [f64; 4],
        pub embedding: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub gt_name: Option<String>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Text {
        pub id: String,
        pub bbox: [f64; 4],
        pub content: String,
        pub essential_score: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub category: Option<TextCategory>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub gt_essential: Option<bool>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Tail {
        pub id: String,
        pub bbox: [f64; 4],
    }

    #[derive(Serialize, Deserialize)]
    pub struct Panel {
        pub id: String,
        pub bbox: [f64; 4],
    }

    #[derive(Serialize, Deserialize, Default)]
    pub struct Edges {
        #[serde(default)]
        pub text_char: Vec<(String, String, f64)>,
        #[serde(default)]
        pub text_tail: Vec<(String, String, f64)>,
        #[serde(default)]
        pub char_char: Vec<(String, String, f64)>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> String {
        r#"{
            "embedding_dim": 2,
            "pages": [
                {
                    "index": 0,
                    "characters": [
                        {"id": "c0", "bbox": [0, 0, 10, 10], "embedding": [3.0, 4.0], "gt_name": "alice"},
                        {"id": "c1", "bbox": [20, 0, 30, 10], "embedding": [1.0, 0.0]}
                    ],
                    "texts": [
                        {"id": "t0", "bbox": [2, 2, 8, 6], "content": "hi", "essential_score": 0.9, "category": "conversational"}
                    ],
                    "tails": [
                        {"id": "l0", "bbox": [4, 6, 6, 8]}
                    ],
                    "panels": [
                        {"id": "p0", "bbox": [0, 0, 40, 20]}
                    ],
                    "edges": {
                        "text_char": [["t0", "c0", 0.8]],
                        "text_tail": [["t0", "l0", 0.7]],
                        "char_char": [["c1", "c0", 0.6]]
                    }
                }
            ]
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_normalizes_embeddings() {
        let ch = Chapter::from_json_str(&sample_json()).unwrap();
        assert_eq!(ch.embedding_dim, 2);
        assert_eq!(ch.pages.len(), 1);
        let c0 = ch.crop("c0").unwrap();
        // [3, 4] has norm 5; stored unit-normalized.
        assert!((c0.embedding.as_slice()[0] - 0.6).abs() < 1e-12);
        assert!((c0.embedding.as_slice()[1] - 0.8).abs() < 1e-12);
        assert!((l2_norm(c0.embedding.as_slice()) - 1.0).abs() < 1e-12);
        assert_eq!(c0.gt_name.as_deref(), Some("alice"));
    }

    #[test]
    fn char_char_keys_are_canonical() {
        let ch = Chapter::from_json_str(&sample_json()).unwrap();
        let edges = &ch.pages[0].edges;
        // Input order was (c1, c0); lookup works both ways off one key.
        assert_eq!(edges.char_char_score("c0", "c1"), 0.6);
        assert_eq!(edges.char_char_score("c1", "c0"), 0.6);
        assert_eq!(edges.char_char.len(), 1);
        assert!(edges.char_char.contains_key(&("c0".into(), "c1".into())));
    }

    #[test]
    fn missing_edges_score_zero() {
        let ch = Chapter::from_json_str(&sample_json()).unwrap();
        assert_eq!(ch.pages[0].edges.text_char_score("t0", "c1"), 0.0);
        assert_eq!(ch.pages[0].edges.char_char_score("c0", "c0"), 0.0);
    }

    #[test]
    fn round_trip_preserves_chapter() {
        let ch = Chapter::from_json_str(&sample_json()).unwrap();
        let json = ch.to_json_string();
        let back = Chapter::from_json_str(&json).unwrap();
        assert_eq!(ch, back);
        // Serialization is canonical: serializing the reparse is byte-identical.
        assert_eq!(json, back.to_json_string());
    }

    #[test]
    fn rejects_duplicate_ids_across_kinds() {
        let bad = sample_json().replace("\"id\": \"l0\"", "\"id\": \"c0\"");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
    }

    #[test]
    fn rejects_unknown_edge_endpoint() {
        let bad = sample_json().replace("[\"t0\", \"c0\", 0.8]", "[\"t0\", \"c9\", 0.8]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("unknown character"), "{err}");
    }

    #[test]
    fn rejects_cross_page_edges() {
        // Same nodes split over two pages: the edge endpoint is no longer on page 0.
        let two_pages = r#"{
            "embedding_dim": 2,
            "pages": [
                {"index": 0,
                 "characters": [{"id": "c0", "bbox": [0,0,1,1], "embedding": [1.0, 0.0]}],
                 "texts": [], "tails": [], "panels": [],
                 "edges": {"text_char": [], "text_tail": [], "char_char": [["c0", "c1", 0.5]]}},
                {"index": 1,
                 "characters": [{"id": "c1", "bbox": [0,0,1,1], "embedding": [1.0, 0.0]}],
                 "texts": [], "tails": [], "panels": [],
                 "edges": {"text_char": [], "text_tail": [], "char_char": []}}
            ]
        }"#;
        let err = Chapter::from_json_str(two_pages).unwrap_err();
        assert!(err.to_string().contains("unknown character \"c1\""), "{err}");
    }

    #[test]
    fn rejects_out_of_range_score() {
        let bad = sample_json().replace("0.8]", "1.8]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("out of [0, 1]"), "{err}");
    }

    #[test]
    fn rejects_degenerate_box() {
        let bad = sample_json().replace("[0, 0, 10, 10]", "[10, 0, 10, 10]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("degenerate box"), "{err}");
    }

    #[test]
    fn rejects_zero_norm_embedding() {
        let bad = sample_json().replace("[3.0, 4.0]", "[0.0, 0.0]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("zero-norm"), "{err}");
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let bad = sample_json().replace("[3.0, 4.0]", "[3.0, 4.0, 5.0]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn rejects_duplicate_page_index() {
        let two = r#"{
            "embedding_dim": 1,
            "pages": [
                {"index": 3, "characters": [], "texts": [], "tails": [], "panels": [], "edges": {}},
                {"index": 3, "characters": [], "texts": [], "tails": [], "panels": [], "edges": {}}
            ]
        }"#;
        let err = Chapter::from_json_str(two).unwrap_err();
        assert!(err.to_string().contains("duplicate page index"), "{err}");
    }

    #[test]
    fn rejects_self_char_edge() {
        let bad = sample_json().replace("[\"c1\", \"c0\", 0.6]", "[\"c0\", \"c0\", 0.6]");
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("self char_char"), "{err}");
    }

    #[test]
    fn rejects_duplicate_edge_after_canonicalization() {
        let bad = sample_json().replace(
            "[[\"c1\", \"c0\", 0.6]]",
            "[[\"c1\", \"c0\", 0.6], [\"c0\", \"c1\", 0.4]]",
        );
        let err = Chapter::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("duplicate char_char"), "{err}");
    }

    #[test]
    fn iou_matches_hand_computation() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BoundingBox::new(5.0, 5.0, 15.0, 15.0).unwrap();
        // inter 25, union 175.
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
        let c = BoundingBox::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert_eq!(a.iou(&c), 0.0);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn category_essential_split() {
        use TextCategory::*;
        for c in [BackgroundInfo, Conversational, InterjectionExplicit, InterjectionImplicit, InternalThought] {
            assert!(c.is_essential(), "{c:?}");
        }
        for c in [ActionSound, EditorialNote, SceneText, Other] {
            assert!(!c.is_essential(), "{c:?}");
        }
    }
}

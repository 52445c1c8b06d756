//! Pairwise identity constraints over crops, derived from per-page
//! character-character edges: crops joined by an edge at or above the
//! must-link threshold belong to one identity (must-link, transitively
//! closed); crops in different components on the same page are distinct
//! identities (cannot-link). Constraints never cross pages.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chapter::{canonical_pair, BoundingBox, Chapter, PageGraph, PanelNode};
use crate::error::Error;
use crate::Result;

/// Which same-page crop pairs become cannot-links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CannotLinkScope {
    /// Any two crops on the same page in different components.
    SamePage,
    /// Only pairs assigned to the same panel; crops without a panel never
    /// cannot-link. Ablation mode.
    SamePanel,
}

/// Must-link and cannot-link pairs over crop ids. Invariants: pairs are
/// stored smaller-id-first, `must` is transitively closed, and no pair is
/// in both sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    must: BTreeSet<(String, String)>,
    cannot: BTreeSet<(String, String)>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        ConstraintSet::default()
    }

    /// Canonicalizes pairs, closes `must` transitively, then rejects any
    /// cannot-link that lands inside a must component. Self must-links are
    /// dropped as vacuous; a self cannot-link is inconsistent.
    pub fn build<M, C>(must: M, cannot: C) -> Result<Self>
    where
        M: IntoIterator<Item = (String, String)>,
        C: IntoIterator<Item = (String, String)>,
    {
        let mut uf = UnionFind::default();
        for (a, b) in must {
            if a != b {
                uf.union(&a, &b);
            }
        }

        let mut cannot_set = BTreeSet::new();
        for (a, b) in cannot {
            if a == b {
                return Err(Error::InconsistentConstraints(format!(
                    "crop {a:?} cannot-linked to itself"
                )));
            }
            cannot_set.insert(canonical_pair(&a, &b));
        }

        let mut must_set = BTreeSet::new();
        for group in uf.components() {
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    must_set.insert((group[i].clone(), group[j].clone()));
                }
            }
        }

        for (a, b) in &cannot_set {
            if uf.connected(a, b) {
                return Err(Error::InconsistentConstraints(format!(
                    "pair ({a:?}, {b:?}) is both must-linked and cannot-linked"
                )));
            }
        }

        Ok(ConstraintSet {
            must: must_set,
            cannot: cannot_set,
        })
    }

    pub fn must_pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.must.iter()
    }

    pub fn cannot_pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.cannot.iter()
    }

    pub fn must_len(&self) -> usize {
        self.must.len()
    }

    pub fn cannot_len(&self) -> usize {
        self.cannot.len()
    }

    pub fn has_must(&self, a: &str, b: &str) -> bool {
        self.must.contains(&canonical_pair(a, b))
    }

    pub fn has_cannot(&self, a: &str, b: &str) -> bool {
        self.cannot.contains(&canonical_pair(a, b))
    }

    /// Every crop id mentioned by either set.
    pub fn mentioned_ids(&self) -> BTreeSet<&str> {
        self.must
            .iter()
            .chain(self.cannot.iter())
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect()
    }
}

/// Extra pairs supplied alongside the extracted constraints, e.g. manual
/// corrections. File shape: `{"must": [["a","b"]], "cannot": [["c","d"]]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstraintOverrides {
    #[serde(default)]
    pub must: Vec<(String, String)>,
    #[serde(default)]
    pub cannot: Vec<(String, String)>,
}

impl ConstraintOverrides {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })
    }
}

/// Connected components of one page's crops under char-char edges scoring
/// at or above `theta_ml`. Every crop appears in exactly one component;
/// members are sorted and components are ordered by smallest member.
pub fn page_components(page: &PageGraph, theta_ml: f64) -> Vec<Vec<String>> {
    let mut uf = UnionFind::default();
    for c in &page.characters {
        uf.insert(&c.id);
    }
    for ((a, b), score) in &page.edges.char_char {
        if *score >= theta_ml {
            uf.union(a, b);
        }
    }
    uf.components()
}

/// Builds the chapter's constraint set: must-links inside each page
/// component, cannot-links across components per `scope`.
pub fn extract_constraints(
    chapter: &Chapter,
    theta_ml: f64,
    scope: CannotLinkScope,
) -> Result<ConstraintSet> {
    if !theta_ml.is_finite() || !(0.0..=1.0).contains(&theta_ml) {
        return Err(Error::input(format!(
            "must-link threshold {theta_ml} out of [0, 1]"
        )));
    }
    let mut must = Vec::new();
    let mut cannot = Vec::new();
    for page in &chapter.pages {
        let components = page_components(page, theta_ml);
        let mut component_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (ci, group) in components.iter().enumerate() {
            for id in group {
                component_of.insert(id, ci);
            }
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    must.push((group[i].clone(), group[j].clone()));
                }
            }
        }

        let input_order: Vec<usize> = (0..page.panels.len()).collect();
        let panel_of: BTreeMap<&str, Option<usize>> = page
            .characters
            .iter()
            .map(|c| {
                (
                    c.id.as_str(),
                    assign_to_panel(&c.bbox, &page.panels, &input_order),
                )
            })
            .collect();

        for i in 0..page.characters.len() {
            for j in (i + 1)..page.characters.len() {
                let a = &page.characters[i].id;
                let b = &page.characters[j].id;
                if component_of[a.as_str()] == component_of[b.as_str()] {
                    continue;
                }
                let in_scope = match scope {
                    CannotLinkScope::SamePage => true,
                    CannotLinkScope::SamePanel => match (panel_of[a.as_str()], panel_of[b.as_str()]) {
                        (Some(pa), Some(pb)) => pa == pb,
                        _ => false,
                    },
                };
                if in_scope {
                    cannot.push((a.clone(), b.clone()));
                }
            }
        }
    }
    ConstraintSet::build(must, cannot)
}

/// Merges override pairs into `base` and revalidates. Override ids must
/// name crops of `chapter`.
pub fn merge_overrides(
    chapter: &Chapter,
    base: &ConstraintSet,
    overrides: &ConstraintOverrides,
) -> Result<ConstraintSet> {
    let known: BTreeSet<String> = chapter.crop_ids().into_iter().collect();
    for (a, b) in overrides.must.iter().chain(&overrides.cannot) {
        for id in [a, b] {
            if !known.contains(id) {
                return Err(Error::input(format!("override names unknown crop {id:?}")));
            }
        }
    }
    let must = base
        .must
        .iter()
        .chain(&overrides_pairs(&overrides.must))
        .cloned()
        .collect::<Vec<_>>();
    let cannot = base
        .cannot
        .iter()
        .chain(&overrides_pairs(&overrides.cannot))
        .cloned()
        .collect::<Vec<_>>();
    ConstraintSet::build(must, cannot)
}

fn overrides_pairs(pairs: &[(String, String)]) -> Vec<(String, String)> {
    pairs.to_vec()
}

/// Constraints implied by ground-truth identities: per page, same `gt_name`
/// must-links, different `gt_name` cannot-links. Every crop needs a
/// `gt_name`.
pub fn gt_constraints(chapter: &Chapter) -> Result<ConstraintSet> {
    let mut must = Vec::new();
    let mut cannot = Vec::new();
    for page in &chapter.pages {
        for c in &page.characters {
            if c.gt_name.is_none() {
                return Err(Error::input(format!(
                    "crop {:?} has no ground-truth identity",
                    c.id
                )));
            }
        }
        for i in 0..page.characters.len() {
            for j in (i + 1)..page.characters.len() {
                let (a, b) = (&page.characters[i], &page.characters[j]);
                let pair = (a.id.clone(), b.id.clone());
                if a.gt_name == b.gt_name {
                    must.push(pair);
                } else {
                    cannot.push(pair);
                }
            }
        }
    }
    ConstraintSet::build(must, cannot)
}

/// Index of the panel owning `b`: largest overlap wins; among zero-overlap
/// panels, nearest center. `preference` breaks exact ties (earlier wins)
/// and must be a permutation of panel indices. None when `panels` is empty.
pub fn assign_to_panel(
    b: &BoundingBox,
    panels: &[PanelNode],
    preference: &[usize],
) -> Option<usize> {
    debug_assert_eq!(preference.len(), panels.len());
    let mut best: Option<(usize, f64)> = None; // (panel index, overlap)
    for &pi in preference {
        let overlap = b.intersection_area(&panels[pi].bbox);
        if overlap > 0.0 && best.is_none_or(|(_, o)| overlap > o) {
            best = Some((pi, overlap));
        }
    }
    if let Some((pi, _)) = best {
        return Some(pi);
    }
    let (bc_x, bc_y) = b.center();
    let mut nearest: Option<(usize, f64)> = None;
    for &pi in preference {
        let (px, py) = panels[pi].bbox.center();
        let d2 = (bc_x - px).powi(2) + (bc_y - py).powi(2);
        if nearest.is_none_or(|(_, nd)| d2 < nd) {
            nearest = Some((pi, d2));
        }
    }
    nearest.map(|(pi, _)| pi)
}

#[derive(Default)]
struct UnionFind {
    parent: BTreeMap<String, String>,
}

impl UnionFind {
    fn insert(&mut self, id: &str) {
        self.parent
            .entry(id.to_string())
            .or_insert_with(|| id.to_string());
    }

    fn find(&mut self, id: &str) -> String {
        self.insert(id);
        let mut root = id.to_string();
        while self.parent[&root] != root {
            root = self.parent[&root].clone();
        }
        // Path compression.
        let mut cur = id.to_string();
        while self.parent[&cur] != root {
            let next = self.parent[&cur].clone();
            self.parent.insert(cur, root.clone());
            cur = next;
        }
        root
    }

    fn union(&mut self, a: &str, b: &str) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Smaller root id wins, keeping roots deterministic.
            if ra < rb {
                self.parent.insert(rb, ra);
            } else {
                self.parent.insert(ra, rb);
            }
        }
    }

    fn connected(&mut self, a: &str, b: &str) -> bool {
        self.find(a) == self.find(b)
    }

    /// Sorted members, components ordered by smallest member.
    fn components(&mut self) -> Vec<Vec<String>> {
        let ids: Vec<String> = self.parent.keys().cloned().collect();
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in ids {
            let root = self.find(&id);
            groups.entry(root).or_default().push(id);
        }
        groups.into_values().collect()
    }
}

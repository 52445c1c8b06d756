//! Evaluation suite: box matching, average precision, clustering agreement
//! (AMI/NMI), embedding retrieval metrics, speaker-edge AP with identity
//! max-pooling, text-classification AP, naming accuracy, and report
//! assembly/aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chapter::{BoundingBox, Chapter};
use crate::error::Error;
use crate::Result;

/// Greedy detection matching. Predictions are visited in descending score
/// (stable for ties); each takes the unmatched GT box of highest IoU at or
/// above `iou_min`, lower GT index winning exact ties. The result maps
/// prediction index to GT index and is one-to-one.
pub fn match_boxes(
    pred: &[(BoundingBox, f64)],
    gt: &[BoundingBox],
    iou_min: f64,
) -> Result<BTreeMap<usize, usize>> {
    if !(iou_min > 0.0 && iou_min <= 1.0) {
        return Err(Error::input(format!(
            "iou_min must lie in (0, 1], got {iou_min}"
        )));
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].1.partial_cmp(&pred[a].1).unwrap());
    let mut taken = vec![false; gt.len()];
    let mut matches = BTreeMap::new();
    for pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let iou = pred[pi].0.iou(g);
            if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            matches.insert(pi, gi);
        }
    }
    Ok(matches)
}

/// Average precision of a binary ranking: the mean, over positives in
/// descending-score order (stable on ties), of precision at each positive's
/// rank. Errors when no label is positive.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "scores and labels lengths differ: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|&l| l) {
        return Err(Error::input("AP undefined: no positive labels".to_string()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::input(format!("non-finite score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / hits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    pub ami: f64,
    pub nmi: f64,
}

/// Agreement between two partitions of the same items. NMI uses the
/// arithmetic-mean normalizer; AMI subtracts the exact hypergeometric
/// expected mutual information. Identical partitions (up to relabeling)
/// score 1.0 on both.
pub fn clustering_metrics<T: Ord, U: Ord>(
    true_labels: &[T],
    pred_labels: &[U],
) -> Result<ClusteringMetrics> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::input(format!(
            "partition lengths differ: {} vs {}",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::input("empty partitions".to_string()));
    }
    let t = dense_labels(true_labels);
    let p = dense_labels(pred_labels);
    if t == p {
        return Ok(ClusteringMetrics { ami: 1.0, nmi: 1.0 });
    }
    let n = t.len();
    let rows = 1 + *t.iter().max().unwrap();
    let cols = 1 + *p.iter().max().unwrap();
    let mut contingency = vec![vec![0usize; cols]; rows];
    for (&ti, &pi) in t.iter().zip(&p) {
        contingency[ti][pi] += 1;
    }
    let a: Vec<usize> = contingency.iter().map(|r| r.iter().sum()).collect();
    let b: Vec<usize> = (0..cols).map(|j| contingency.iter().map(|r| r[j]).sum()).collect();

    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in contingency.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += (nij / nf) * ((nf * nij) / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let h_true = entropy(&a);
    let h_pred = entropy(&b);
    let normalizer = 0.5 * (h_true + h_pred);

    let nmi = if mi <= 0.0 || normalizer <= 0.0 {
        0.0
    } else {
        (mi / normalizer).clamp(0.0, 1.0)
    };

    let emi = expected_mutual_information(&a, &b, n);
    // Keep the denominator away from zero, sign preserved.
    let mut denom = normalizer - emi;
    denom = if denom < 0.0 {
        denom.min(-f64::EPSILON)
    } else {
        denom.max(f64::EPSILON)
    };
    let ami = ((mi - emi) / denom).min(1.0);

    Ok(ClusteringMetrics { ami, nmi })
}

/// Relabels by first occurrence so identical partitions compare equal.
fn dense_labels<T: Ord>(labels: &[T]) -> Vec<usize> {
    let mut seen: BTreeMap<&T, usize> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::with_capacity(labels.len());
    for l in labels {
        let next = seen.len();
        order.push(*seen.entry(l).or_insert(next));
    }
    order
}

/// Exact expected mutual information of two partitions with the given
/// cluster sizes under the hypergeometric (permutation) model.
fn expected_mutual_information(a: &[usize], b: &[usize], n: usize) -> f64 {
    // lf[k] = ln(k!)
    let mut lf = vec![0.0f64; n + 1];
    for k in 1..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = 1.max((ai + bj).saturating_sub(n));
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let term = (nij as f64 / nf) * ((nf * nij as f64) / (ai as f64 * bj as f64)).ln();
                let log_prob = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                    - lf[n]
                    - lf[nij]
                    - lf[ai - nij]
                    - lf[bj - nij]
                    - lf[n + nij - ai - bj];
                emi += term * log_prob.exp();
            }
        }
    }
    emi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub p_at_1: f64,
    pub r_precision: f64,
    pub mrr: f64,
    pub map_at_r: f64,
    /// Queries with at least one same-identity other point.
    pub valid_queries: usize,
    /// Queries skipped for lack of any positive.
    pub skipped_queries: usize,
}

/// Nearest-neighbor retrieval quality of an embedding space. Every point
/// queries all others ranked by ascending Euclidean distance (input index
/// breaking exact ties); queries whose identity appears nowhere else are
/// skipped and counted. Errors when no query is valid.
pub fn retrieval_metrics<L: Ord>(embeddings: &[Vec<f64>], labels: &[L]) -> Result<RetrievalMetrics> {
    if embeddings.len() != labels.len() {
        return Err(Error::input(format!(
            "embeddings and labels lengths differ: {} vs {}",
            embeddings.len(),
            labels.len()
        )));
    }
    if embeddings.len() < 2 {
        return Err(Error::input("retrieval needs at least two points".to_string()));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::input("embeddings have mixed dimensions".to_string()));
    }
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite embedding coordinate".to_string()));
    }

    let n = embeddings.len();
    let mut valid = 0usize;
    let mut skipped = 0usize;
    let (mut p1, mut rp, mut mrr, mut mapr) = (0.0, 0.0, 0.0, 0.0);
    for q in 0..n {
        let r = (0..n).filter(|&o| o != q && labels[o] == labels[q]).count();
        if r == 0 {
            skipped += 1;
            continue;
        }
        valid += 1;
        let mut others: Vec<usize> = (0..n).filter(|&o| o != q).collect();
        let dist = |o: usize| crate::chapter::euclidean(&embeddings[q], &embeddings[o]);
        others.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(a.cmp(&b)));

        let rel: Vec<bool> = others.iter().map(|&o| labels[o] == labels[q]).collect();
        if rel[0] {
            p1 += 1.0;
        }
        let first = rel.iter().position(|&x| x).expect("r > 0") + 1;
        mrr += 1.0 / first as f64;
        let top_r_hits = rel[..r].iter().filter(|&&x| x).count();
        rp += top_r_hits as f64 / r as f64;
        let mut hits = 0usize;
        let mut ap_sum = 0.0;
        for (rank0, &is_rel) in rel[..r].iter().enumerate() {
            if is_rel {
                hits += 1;
                ap_sum += hits as f64 / (rank0 + 1) as f64;
            }
        }
        mapr += ap_sum / r as f64;
    }
    if valid == 0 {
        return Err(Error::input(
            "no valid retrieval queries: every identity is unique".to_string(),
        ));
    }
    let v = valid as f64;
    Ok(RetrievalMetrics {
        p_at_1: p1 / v,
        r_precision: rp / v,
        mrr: mrr / v,
        map_at_r: mapr / v,
        valid_queries: valid,
        skipped_queries: skipped,
    })
}

/// One (text, page-present identity) candidate from speaker-edge pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledPair {
    pub page_index: u64,
    pub text_id: String,
    pub identity: String,
    /// Max predicted text-char score over predicted boxes matched to GT
    /// boxes of this identity; 0.0 when none matched.
    pub score: f64,
    /// True iff the GT speaker of this text has this identity.
    pub label: bool,
}

/// Enumerates speaker-edge candidates with identity max-pooling. Predicted
/// character and text boxes are matched page-wise to GT boxes; for every GT
/// text and every identity present on its page, the candidate score is the
/// maximum predicted text-char score over matched boxes of that identity.
/// `gt_speakers` maps text id to speaking crop id; absent texts count as
/// speakerless (all-negative pairs). Every GT character needs a GT identity.
pub fn pooled_speaker_pairs(
    gt: &Chapter,
    gt_speakers: &BTreeMap<String, String>,
    pred: &Chapter,
    iou_min: f64,
) -> Result<Vec<PooledPair>> {
    if gt.pages.len() != pred.pages.len() {
        return Err(Error::input(format!(
            "page counts differ: GT {} vs predicted {}",
            gt.pages.len(),
            pred.pages.len()
        )));
    }
    let mut pairs = Vec::new();
    for (gp, pp) in gt.pages.iter().zip(&pred.pages) {
        let identity_of: BTreeMap<&str, &str> = gp
            .characters
            .iter()
            .map(|c| {
                c.gt_name
                    .as_deref()
                    .map(|n| (c.id.as_str(), n))
                    .ok_or_else(|| {
                        Error::input(format!("GT crop {:?} lacks an identity", c.id))
                    })
            })
            .collect::<Result<_>>()?;
        let identities: BTreeSet<&str> = identity_of.values().copied().collect();

        // Geometry-based matching; the schema carries no detector scores,
        // so ties fall back to input order.
        let pred_chars: Vec<(BoundingBox, f64)> =
            pp.characters.iter().map(|c| (c.bbox, 1.0)).collect();
        let gt_chars: Vec<BoundingBox> = gp.characters.iter().map(|c| c.bbox).collect();
        let char_match = match_boxes(&pred_chars, &gt_chars, iou_min)?;
        let pred_texts: Vec<(BoundingBox, f64)> =
            pp.texts.iter().map(|t| (t.bbox, 1.0)).collect();
        let gt_texts: Vec<BoundingBox> = gp.texts.iter().map(|t| t.bbox).collect();
        let text_match = match_boxes(&pred_texts, &gt_texts, iou_min)?;
        let text_of_gt: BTreeMap<usize, usize> =
            text_match.into_iter().map(|(p, g)| (g, p)).collect();

        for (gti, gt_text) in gp.texts.iter().enumerate() {
            let speaker_identity = gt_speakers
                .get(&gt_text.id)
                .and_then(|crop| identity_of.get(crop.as_str()).copied());
            for &identity in &identities {
                let mut score = 0.0f64;
                if let Some(&pti) = text_of_gt.get(&gti) {
                    for (&pci, &gci) in &char_match {
                        if identity_of[gp.characters[gci].id.as_str()] == identity {
                            let s = pp
                                .edges
                                .text_char_score(&pp.texts[pti].id, &pp.characters[pci].id);
                            score = score.max(s);
                        }
                    }
                }
                pairs.push(PooledPair {
                    page_index: gp.index,
                    text_id: gt_text.id.clone(),
                    identity: identity.to_string(),
                    score,
                    label: speaker_identity == Some(identity),
                });
            }
        }
    }
    Ok(pairs)
}

/// Speaker-edge average precision under identity max-pooling.
pub fn edge_ap_text_char_identity(
    gt: &Chapter,
    gt_speakers: &BTreeMap<String, String>,
    pred: &Chapter,
    iou_min: f64,
) -> Result<f64> {
    let pairs = pooled_speaker_pairs(gt, gt_speakers, pred, iou_min)?;
    let scores: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    average_precision(&scores, &labels)
}

/// Fraction of crops named identically in both maps ("other" is an ordinary
/// class). The key sets must coincide.
pub fn naming_accuracy(
    gt_names: &BTreeMap<String, String>,
    pred_names: &BTreeMap<String, String>,
) -> Result<f64> {
    if gt_names.len() != pred_names.len()
        || !gt_names.keys().eq(pred_names.keys())
    {
        return Err(Error::input(
            "naming accuracy needs identical crop id sets".to_string(),
        ));
    }
    if gt_names.is_empty() {
        return Err(Error::input("naming accuracy on empty maps".to_string()));
    }
    let hits = gt_names
        .iter()
        .filter(|(k, v)| pred_names[*k] == **v)
        .count();
    Ok(hits as f64 / gt_names.len() as f64)
}

/// AP of the essential-vs-nonessential ranking: every text's predicted
/// essential score against its ground-truth flag. All texts need the flag.
pub fn text_classification_ap(gt_flags: &[bool], essential_scores: &[f64]) -> Result<f64> {
    if gt_flags.iter().all(|&f| f) {
        // All-positive rankings are perfect by definition and AP's guard
        // does not apply.
        if gt_flags.is_empty() {
            return Err(Error::input("no texts to classify".to_string()));
        }
        return Ok(1.0);
    }
    average_precision(essential_scores, gt_flags)
}

/// Assembled evaluation output: metric values, item counts, and the
/// parameters the values depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl MetricReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_file(path: &std::path::Path) -> Result<MetricReport> {
        let data = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Plain-text rendering: one aligned `name  value` row per entry,
    /// grouped into metrics / counts / params sections.
    pub fn render_table(&self) -> String {
        let sections: [(&str, Vec<(String, String)>); 3] = [
            (
                "metric",
                self.metrics
                    .iter()
                    .map(|(k, v)| (k.clone(), format!("{v:.6}")))
                    .collect(),
            ),
            (
                "count",
                self.counts
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_string()))
                    .collect(),
            ),
            (
                "param",
                self.params
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_string()))
                    .collect(),
            ),
        ];
        let key_w = sections
            .iter()
            .flat_map(|(h, rows)| std::iter::once(h.len()).chain(rows.iter().map(|(k, _)| k.len())))
            .max()
            .unwrap_or(0);
        let val_w = sections
            .iter()
            .flat_map(|(_, rows)| rows.iter().map(|(_, v)| v.len()))
            .max()
            .unwrap_or(0)
            .max("value".len());
        let mut out = String::new();
        for (header, rows) in &sections {
            if rows.is_empty() {
                continue;
            }
            out.push_str(&format!("{header:<key_w$}  {:>val_w$}\n", "value"));
            out.push_str(&format!("{:-<key_w$}  {:-<val_w$}\n", "", ""));
            for (k, v) in rows {
                out.push_str(&format!("{k:<key_w$}  {v:>val_w$}\n"));
            }
        }
        out
    }
}

/// Everything one chapter evaluation can draw on. Optional inputs switch
/// their metrics off rather than erroring.
pub struct EvalInputs<'a> {
    pub gt: &'a Chapter,
    pub pred: &'a Chapter,
    /// Collapsed GT names (non-principal crops as "other") for naming accuracy.
    pub gt_names: Option<&'a BTreeMap<String, String>>,
    /// GT speaker crop per text, for speaker-edge AP.
    pub gt_speakers: Option<&'a BTreeMap<String, String>>,
    /// Predicted naming to score and to cluster by.
    pub naming: Option<&'a BTreeMap<String, String>>,
    pub iou_min: f64,
    /// Must-link threshold used when clustering falls back to edge components.
    pub theta_ml: f64,
}

/// Checks that predicted and GT chapters describe the same pages, crops,
/// and texts (geometry and scores may differ).
pub fn check_aligned(gt: &Chapter, pred: &Chapter) -> Result<()> {
    if gt.pages.len() != pred.pages.len() {
        return Err(Error::input(format!(
            "misaligned id sets: GT has {} pages, prediction {}",
            gt.pages.len(),
            pred.pages.len()
        )));
    }
    for (gp, pp) in gt.pages.iter().zip(&pred.pages) {
        if gp.index != pp.index {
            return Err(Error::input(format!(
                "misaligned id sets: page {} vs {}",
                gp.index, pp.index
            )));
        }
        let gc: BTreeSet<&str> = gp.characters.iter().map(|c| c.id.as_str()).collect();
        let pc: BTreeSet<&str> = pp.characters.iter().map(|c| c.id.as_str()).collect();
        if gc != pc {
            return Err(Error::input(format!(
                "misaligned id sets: crop ids differ on page {}",
                gp.index
            )));
        }
        let gtx: BTreeSet<&str> = gp.texts.iter().map(|t| t.id.as_str()).collect();
        let ptx: BTreeSet<&str> = pp.texts.iter().map(|t| t.id.as_str()).collect();
        if gtx != ptx {
            return Err(Error::input(format!(
                "misaligned id sets: text ids differ on page {}",
                gp.index
            )));
        }
    }
    Ok(())
}

/// Runs every metric its inputs allow on one aligned chapter pair and
/// assembles the report. Clustering compares per-page partitions of crops
/// (GT identity vs predicted naming when given, else predicted must-link
/// edge components), averaged over pages with two or more crops. Retrieval
/// pools all chapter crops. Identity pooling for the speaker-edge AP uses
/// page-present identities; this choice is recorded in the params.
pub fn evaluate_chapter(inputs: &EvalInputs) -> Result<MetricReport> {
    let EvalInputs {
        gt,
        pred,
        gt_names,
        gt_speakers,
        naming,
        iou_min,
        theta_ml,
    } = *inputs;
    if !(0.0..=1.0).contains(&theta_ml) {
        return Err(Error::input(format!(
            "theta_ml must lie in [0, 1], got {theta_ml}"
        )));
    }
    check_aligned(gt, pred)?;

    let mut metrics = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut params = BTreeMap::new();
    counts.insert("pages".to_string(), gt.pages.len() as u64);
    counts.insert("crops".to_string(), gt.crop_ids().len() as u64);
    counts.insert(
        "texts".to_string(),
        gt.pages.iter().map(|p| p.texts.len() as u64).sum(),
    );
    params.insert("iou_min".to_string(), serde_json::json!(iou_min));
    params.insert("theta_ml".to_string(), serde_json::json!(theta_ml));

    let identities: Option<BTreeMap<&str, &str>> = gt
        .crops()
        .into_iter()
        .map(|c| c.gt_name.as_deref().map(|n| (c.id.as_str(), n)))
        .collect();

    // Per-page clustering agreement against the GT identity partition.
    if let Some(identity_of) = &identities {
        params.insert(
            "clustering_pred".to_string(),
            serde_json::json!(if naming.is_some() { "naming" } else { "edge_components" }),
        );
        let mut sums = ClusteringMetrics { ami: 0.0, nmi: 0.0 };
        let mut evaluated = 0u64;
        let mut skipped = 0u64;
        for page in &pred.pages {
            if page.characters.len() < 2 {
                skipped += 1;
                continue;
            }
            let truth: Vec<&str> = page
                .characters
                .iter()
                .map(|c| identity_of[c.id.as_str()])
                .collect();
            let predicted: Vec<String> = match naming {
                Some(map) => page
                    .characters
                    .iter()
                    .map(|c| {
                        map.get(&c.id).cloned().ok_or_else(|| {
                            Error::input(format!("naming map misses crop {:?}", c.id))
                        })
                    })
                    .collect::<Result<_>>()?,
                None => {
                    let comps = crate::constraints::page_components(page, theta_ml);
                    let mut label = BTreeMap::new();
                    for (ci, comp) in comps.iter().enumerate() {
                        for id in comp {
                            label.insert(id.clone(), ci.to_string());
                        }
                    }
                    page.characters
                        .iter()
                        .map(|c| label[&c.id].clone())
                        .collect()
                }
            };
            let m = clustering_metrics(&truth, &predicted)?;
            sums.ami += m.ami;
            sums.nmi += m.nmi;
            evaluated += 1;
        }
        counts.insert("clustering_pages".to_string(), evaluated);
        counts.insert("clustering_pages_skipped".to_string(), skipped);
        if evaluated > 0 {
            metrics.insert("clustering_ami".to_string(), sums.ami / evaluated as f64);
            metrics.insert("clustering_nmi".to_string(), sums.nmi / evaluated as f64);
        }

        // Chapter-pooled retrieval over predicted embeddings.
        let embeddings: Vec<Vec<f64>> = pred
            .crops()
            .into_iter()
            .map(|c| c.embedding.as_slice().to_vec())
            .collect();
        let labels: Vec<&str> = pred
            .crops()
            .into_iter()
            .map(|c| identity_of[c.id.as_str()])
            .collect();
        if embeddings.len() >= 2 {
            match retrieval_metrics(&embeddings, &labels) {
                Ok(r) => {
                    metrics.insert("retrieval_p_at_1".to_string(), r.p_at_1);
                    metrics.insert("retrieval_r_precision".to_string(), r.r_precision);
                    metrics.insert("retrieval_mrr".to_string(), r.mrr);
                    metrics.insert("retrieval_map_at_r".to_string(), r.map_at_r);
                    counts.insert("retrieval_queries".to_string(), r.valid_queries as u64);
                    counts.insert(
                        "retrieval_queries_skipped".to_string(),
                        r.skipped_queries as u64,
                    );
                }
                Err(Error::InvalidInput(_)) => {
                    counts.insert("retrieval_queries".to_string(), 0);
                    counts.insert(
                        "retrieval_queries_skipped".to_string(),
                        embeddings.len() as u64,
                    );
                }
                Err(e) => return Err(e),
            }
        }
    }

    // Speaker-edge AP with identity max-pooling.
    if let Some(speakers) = gt_speakers {
        params.insert(
            "edge_ap_pooling".to_string(),
            serde_json::json!("page_present_identities"),
        );
        let pairs = pooled_speaker_pairs(gt, speakers, pred, iou_min)?;
        counts.insert("edge_ap_pairs".to_string(), pairs.len() as u64);
        if pairs.iter().any(|p| p.label) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.score).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
            metrics.insert(
                "edge_ap_text_char".to_string(),
                average_precision(&scores, &labels)?,
            );
        }
    }

    // Essential-text classification AP from GT flags.
    let flags: Option<Vec<bool>> = gt
        .pages
        .iter()
        .flat_map(|p| &p.texts)
        .map(|t| t.gt_essential)
        .collect();
    if let Some(flags) = flags {
        if !flags.is_empty() {
            let by_id: BTreeMap<&str, f64> = pred
                .pages
                .iter()
                .flat_map(|p| &p.texts)
                .map(|t| (t.id.as_str(), t.essential_score))
                .collect();
            let scores: Vec<f64> = gt
                .pages
                .iter()
                .flat_map(|p| &p.texts)
                .map(|t| by_id[t.id.as_str()])
                .collect();
            metrics.insert(
                "text_essential_ap".to_string(),
                text_classification_ap(&flags, &scores)?,
            );
        }
    }

    // Naming accuracy of the predicted assignment against collapsed GT names.
    if let (Some(gt_map), Some(pred_map)) = (gt_names, naming) {
        metrics.insert(
            "naming_accuracy".to_string(),
            naming_accuracy(gt_map, pred_map)?,
        );
    }

    Ok(MetricReport {
        metrics,
        counts,
        params,
    })
}

/// Merges per-chapter reports: unweighted mean of every metric over the
/// chapters reporting it, summed counts, shared params (first wins).
pub fn merge_reports(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::input("no reports to merge".to_string()));
    }
    let mut sums: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut params: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    for r in reports {
        for (k, v) in &r.metrics {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        for (k, v) in &r.counts {
            *counts.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &r.params {
            params.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    counts.insert("chapters".to_string(), reports.len() as u64);
    Ok(MetricReport {
        metrics: sums
            .into_iter()
            .map(|(k, (s, c))| (k, s / c as f64))
            .collect(),
        counts,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    // Values frozen from the reference scikit-learn implementation
    // (adjusted_mutual_info_score / normalized_mutual_info_score).
    const AMI_FROZEN: f64 = 0.14727171454170332;
    const NMI_FROZEN: f64 = 0.38033214891787165;

    #[test]
    fn box_matching_hand_cases() {
        let g = vec![bx(0.0, 0.0, 10.0, 10.0)];
        let m = match_boxes(&[(bx(0.0, 0.0, 10.0, 10.0), 0.9)], &g, 0.5).unwrap();
        assert_eq!(m, BTreeMap::from([(0, 0)]));
        let m = match_boxes(&[(bx(20.0, 20.0, 30.0, 30.0), 0.9)], &g, 0.5).unwrap();
        assert!(m.is_empty());
        // Two predictions over one GT box: the higher score wins.
        let m = match_boxes(
            &[
                (bx(0.0, 0.0, 10.0, 10.0), 0.8),
                (bx(0.0, 0.0, 10.0, 10.0), 0.9),
            ],
            &g,
            0.5,
        )
        .unwrap();
        assert_eq!(m, BTreeMap::from([(1, 0)]));
        // Equal IoU against two GT boxes: lower GT index wins.
        let g2 = vec![bx(0.0, 0.0, 10.0, 10.0), bx(0.0, 0.0, 10.0, 10.0)];
        let m = match_boxes(&[(bx(0.0, 0.0, 10.0, 10.0), 0.5)], &g2, 0.5).unwrap();
        assert_eq!(m, BTreeMap::from([(0, 0)]));
        assert!(match_boxes(&[], &g, 0.0).is_err());
        assert!(match_boxes(&[], &g, 1.1).is_err());
    }

    #[test]
    fn box_matching_is_one_to_one_and_respects_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut boxes = |n: usize| -> Vec<BoundingBox> {
                (0..n)
                    .map(|_| {
                        let x1 = rng.gen_range(0.0..80.0);
                        let y1 = rng.gen_range(0.0..80.0);
                        bx(x1, y1, x1 + rng.gen_range(5.0..25.0), y1 + rng.gen_range(5.0..25.0))
                    })
                    .collect()
            };
            let gt = boxes(6);
            let pred: Vec<(BoundingBox, f64)> = boxes(8)
                .into_iter()
                .map(|b| (b, rng.gen_range(0.0..1.0)))
                .collect();
            let m = match_boxes(&pred, &gt, 0.3).unwrap();
            let gts: BTreeSet<usize> = m.values().copied().collect();
            assert_eq!(gts.len(), m.len(), "GT boxes matched at most once");
            for (&pi, &gi) in &m {
                assert!(pred[pi].0.iou(&gt[gi]) >= 0.3);
            }
        }
    }

    #[test]
    fn ap_hand_example_and_guards() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        let ap = average_precision(&[0.9, 0.2], &[true, false]).unwrap();
        assert_eq!(ap, 1.0);
        assert!(average_precision(&[0.9], &[false]).is_err());
        assert!(average_precision(&[0.9], &[true, false]).is_err());
    }

    #[test]
    fn ap_ties_keep_input_order() {
        // All scores equal: ranking is the input order.
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
        let ap = average_precision(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_is_invariant_under_monotone_score_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.gen_range(2..20);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            let base = average_precision(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 2.0).collect();
            let ap = average_precision(&warped, &labels).unwrap();
            assert!((base - ap).abs() < 1e-12);
        }
    }

    #[test]
    fn clustering_identities_and_permutations_score_one() {
        let m = clustering_metrics(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!((m.ami, m.nmi), (1.0, 1.0));
        // Relabeled but identical partition.
        let m = clustering_metrics(&[0, 0, 1, 1], &["b", "b", "a", "a"]).unwrap();
        assert_eq!((m.ami, m.nmi), (1.0, 1.0));
        assert!(clustering_metrics(&[0, 1], &[0]).is_err());
        assert!(clustering_metrics::<u8, u8>(&[], &[]).is_err());
    }

    #[test]
    fn clustering_matches_frozen_reference_values() {
        let m = clustering_metrics(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 1]).unwrap();
        assert!((m.ami - AMI_FROZEN).abs() < 1e-9, "ami {}", m.ami);
        assert!((m.nmi - NMI_FROZEN).abs() < 1e-9, "nmi {}", m.nmi);
    }

    #[test]
    fn clustering_zero_entropy_special_cases() {
        // Both partitions trivial and identical.
        let m = clustering_metrics(&[7, 7, 7], &[0, 0, 0]).unwrap();
        assert_eq!((m.ami, m.nmi), (1.0, 1.0));
        // One side trivial, partitions differ.
        let m = clustering_metrics(&[0, 0, 0], &[0, 1, 2]).unwrap();
        assert_eq!((m.ami, m.nmi), (0.0, 0.0));
        let m = clustering_metrics(&[0, 1, 2], &[5, 5, 5]).unwrap();
        assert_eq!((m.ami, m.nmi), (0.0, 0.0));
    }

    // Direct-formula AMI oracle on small inputs: plain factorials are exact
    // in f64 up to 20!, so hypergeometric terms need no log-space tricks.
    fn ami_oracle(t: &[usize], p: &[usize]) -> f64 {
        fn fact(k: usize) -> f64 {
            (1..=k).map(|i| i as f64).product()
        }
        let n = t.len();
        let rows = 1 + t.iter().max().unwrap();
        let cols = 1 + p.iter().max().unwrap();
        let mut c = vec![vec![0usize; cols]; rows];
        for (&i, &j) in t.iter().zip(p) {
            c[i][j] += 1;
        }
        let a: Vec<usize> = c.iter().map(|r| r.iter().sum()).collect();
        let b: Vec<usize> = (0..cols).map(|j| c.iter().map(|r| r[j]).sum()).collect();
        let nf = n as f64;
        let mut mi = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                if c[i][j] > 0 {
                    let nij = c[i][j] as f64;
                    mi += nij / nf * ((nf * nij) / (a[i] as f64 * b[j] as f64)).ln();
                }
            }
        }
        let h = |xs: &[usize]| -> f64 {
            xs.iter()
                .filter(|&&x| x > 0)
                .map(|&x| {
                    let q = x as f64 / nf;
                    -q * q.ln()
                })
                .sum()
        };
        let mut emi = 0.0;
        for &ai in &a {
            for &bj in &b {
                let lo = 1.max((ai + bj).saturating_sub(n));
                for nij in lo..=ai.min(bj) {
                    let term =
                        nij as f64 / nf * ((nf * nij as f64) / (ai as f64 * bj as f64)).ln();
                    let prob = fact(ai) * fact(bj) * fact(n - ai) * fact(n - bj)
                        / (fact(n)
                            * fact(nij)
                            * fact(ai - nij)
                            * fact(bj - nij)
                            * fact(n + nij - ai - bj));
                    emi += term * prob;
                }
            }
        }
        let norm = 0.5 * (h(&a) + h(&b));
        (mi - emi) / (norm - emi)
    }

    #[test]
    fn ami_agrees_with_direct_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 40 {
            let n = rng.gen_range(3..=12);
            let kt = rng.gen_range(2..=3);
            let kp = rng.gen_range(2..=3);
            let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp)).collect();
            if dense_labels(&t) == dense_labels(&p) {
                continue; // identical partitions take the exact-1.0 shortcut
            }
            let got = clustering_metrics(&t, &p).unwrap().ami;
            let want = ami_oracle(&t, &p);
            assert!((got - want).abs() < 1e-9, "ami {got} vs oracle {want}");
            checked += 1;
        }
    }

    #[test]
    fn retrieval_on_separable_clusters_is_perfect() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..4 {
            pts.push(vec![0.0, i as f64 * 0.01]);
            labels.push("a");
            pts.push(vec![10.0, i as f64 * 0.01]);
            labels.push("b");
        }
        let r = retrieval_metrics(&pts, &labels).unwrap();
        assert_eq!(
            (r.p_at_1, r.r_precision, r.mrr, r.map_at_r),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!((r.valid_queries, r.skipped_queries), (8, 0));
    }

    #[test]
    fn retrieval_guards() {
        // Every identity unique: no valid query.
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(retrieval_metrics(&pts, &["a", "b", "c"]).is_err());
        assert!(retrieval_metrics(&[vec![0.0]], &["a"]).is_err());
        // Singleton identities are skipped and counted.
        let pts = vec![vec![0.0], vec![0.5], vec![9.0]];
        let r = retrieval_metrics(&pts, &["a", "a", "z"]).unwrap();
        assert_eq!((r.valid_queries, r.skipped_queries), (2, 1));
        assert_eq!(r.p_at_1, 1.0);
    }

    #[test]
    fn retrieval_hand_example_on_a_line() {
        // Positions: a=0, a=1, b=2, a=3, b=4, b=5.
        let pts: Vec<Vec<f64>> =
            [0.0, 1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&x| vec![x]).collect();
        let labels = ["a", "a", "b", "a", "b", "b"];
        // Hand-derived rank tables, R = 2 for every query. Ranked others as
        // indices (distance ties broken by index), then relevance:
        // q0: [1,2,3,4,5] rel [T,F,T,F,F]: p1=1, rr=1, rp=1/2, map=1/2.
        // q1: [0,2,3,4,5] rel [T,F,T,F,F]: p1=1, rr=1, rp=1/2, map=1/2.
        // q2: [1,3,0,4,5] rel [F,F,F,T,T]: p1=0, rr=1/4, rp=0, map=0.
        // q3: [2,4,1,5,0] rel [F,F,T,F,T]: p1=0, rr=1/3, rp=0, map=0.
        // q4: [3,5,2,1,0] rel [F,T,T,F,F]: p1=0, rr=1/2, rp=1/2, map=1/4.
        // q5: [4,3,2,1,0] rel [T,F,T,F,F]: p1=1, rr=1, rp=1/2, map=1/2.
        let r = retrieval_metrics(&pts, &labels).unwrap();
        assert!((r.p_at_1 - 3.0 / 6.0).abs() < 1e-12);
        assert!((r.mrr - (1.0 + 1.0 + 0.25 + 1.0 / 3.0 + 0.5 + 1.0) / 6.0).abs() < 1e-12);
        assert!((r.r_precision - (0.5 + 0.5 + 0.0 + 0.0 + 0.5 + 0.5) / 6.0).abs() < 1e-12);
        assert!((r.map_at_r - (0.5 + 0.5 + 0.0 + 0.0 + 0.25 + 0.5) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn map_at_r_never_exceeds_r_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.gen_range(4..24);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            if let Ok(r) = retrieval_metrics(&pts, &labels) {
                assert!(r.map_at_r <= r.r_precision + 1e-12);
                assert!(r.r_precision <= 1.0);
            }
        }
    }

    #[test]
    fn p_at_1_dominates_map_at_r_on_clustered_data() {
        // Identity-clustered embeddings (centers far apart, sigma 0.15):
        // the regime the pipeline produces, where the nearest neighbor is
        // almost always correct.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let mut pts = Vec::new();
            let mut labels = Vec::new();
            for c in 0..3 {
                let center: Vec<f64> = (0..4).map(|d| if d == c { 3.0 } else { 0.0 }).collect();
                for _ in 0..6 {
                    pts.push(
                        center
                            .iter()
                            .map(|&x| x + 0.15 * rng.gen_range(-1.0..1.0))
                            .collect(),
                    );
                    labels.push(c);
                }
            }
            let r = retrieval_metrics(&pts, &labels).unwrap();
            assert!(r.p_at_1 >= r.map_at_r - 1e-12);
        }
    }

    fn pooling_fixture(scores: &[(&str, &str, f64)]) -> (Chapter, BTreeMap<String, String>) {
        // One page: two crops of identity A, one text spoken by the first.
        let mut ch = Chapter::from_json_str(
            r#"{
                "embedding_dim": 1,
                "pages": [{
                    "index": 0,
                    "characters": [
                        {"id": "c1", "bbox": [0, 0, 10, 10], "embedding": [1.0], "gt_name": "A"},
                        {"id": "c2", "bbox": [20, 0, 30, 10], "embedding": [1.0], "gt_name": "A"}
                    ],
                    "texts": [
                        {"id": "t1", "bbox": [40, 0, 50, 10], "content": "hi", "essential_score": 1.0}
                    ],
                    "tails": [],
                    "panels": [],
                    "edges": {}
                }]
            }"#,
        )
        .unwrap();
        for &(t, c, s) in scores {
            ch.pages[0]
                .edges
                .text_char
                .insert((t.to_string(), c.to_string()), s);
        }
        let speakers = BTreeMap::from([("t1".to_string(), "c1".to_string())]);
        (ch, speakers)
    }

    #[test]
    fn identity_pooling_takes_the_max_score() {
        let (ch, speakers) = pooling_fixture(&[("t1", "c1", 0.2), ("t1", "c2", 0.7)]);
        let pairs = pooled_speaker_pairs(&ch, &speakers, &ch, 0.5).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].identity, "A");
        assert_eq!(pairs[0].score, 0.7);
        assert!(pairs[0].label);
        assert_eq!(edge_ap_text_char_identity(&ch, &speakers, &ch, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn unmatched_predictions_pool_to_zero() {
        let (gt, speakers) = pooling_fixture(&[("t1", "c1", 0.9), ("t1", "c2", 0.9)]);
        let mut pred = gt.clone();
        // Shift both predicted crops away: no box matches, so the pooled
        // score drops to zero.
        for c in &mut pred.pages[0].characters {
            c.bbox = bx(c.bbox.x1 + 500.0, c.bbox.y1, c.bbox.x2 + 500.0, c.bbox.y2);
        }
        let pairs = pooled_speaker_pairs(&gt, &speakers, &pred, 0.5).unwrap();
        assert_eq!(pairs[0].score, 0.0);
    }

    #[test]
    fn pooling_requires_gt_identities() {
        let (mut ch, speakers) = pooling_fixture(&[]);
        ch.pages[0].characters[1].gt_name = None;
        assert!(pooled_speaker_pairs(&ch, &speakers, &ch, 0.5).is_err());
    }

    #[test]
    fn edge_ap_agrees_with_flat_enumeration_oracle() {
        // Two identities, three crops, two texts, corrupted scores; the
        // oracle rebuilds the pair list by brute force over identities and
        // recomputes AP from first principles.
        let ch = Chapter::from_json_str(
            r#"{
                "embedding_dim": 1,
                "pages": [{
                    "index": 0,
                    "characters": [
                        {"id": "c1", "bbox": [0, 0, 10, 10], "embedding": [1.0], "gt_name": "A"},
                        {"id": "c2", "bbox": [20, 0, 30, 10], "embedding": [1.0], "gt_name": "B"},
                        {"id": "c3", "bbox": [40, 0, 50, 10], "embedding": [1.0], "gt_name": "A"}
                    ],
                    "texts": [
                        {"id": "t1", "bbox": [60, 0, 70, 10], "content": "x", "essential_score": 1.0},
                        {"id": "t2", "bbox": [80, 0, 90, 10], "content": "y", "essential_score": 1.0}
                    ],
                    "tails": [],
                    "panels": [],
                    "edges": {"text_char": [
                        ["t1", "c1", 0.55], ["t1", "c2", 0.6], ["t1", "c3", 0.1],
                        ["t2", "c1", 0.3], ["t2", "c2", 0.8], ["t2", "c3", 0.2]
                    ]}
                }]
            }"#,
        )
        .unwrap();
        let speakers = BTreeMap::from([
            ("t1".to_string(), "c1".to_string()),
            ("t2".to_string(), "c2".to_string()),
        ]);
        let got = edge_ap_text_char_identity(&ch, &speakers, &ch, 0.5).unwrap();

        // Oracle: identical boxes match themselves; enumerate and rank.
        let mut entries: Vec<(f64, bool)> = Vec::new();
        for (t, spk) in [("t1", "A"), ("t2", "B")] {
            for identity in ["A", "B"] {
                let crops: Vec<&str> = match identity {
                    "A" => vec!["c1", "c3"],
                    _ => vec!["c2"],
                };
                let score = crops
                    .iter()
                    .map(|c| ch.pages[0].edges.text_char_score(t, c))
                    .fold(0.0f64, f64::max);
                entries.push((score, identity == spk));
            }
        }
        entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut hits = 0;
        let mut sum = 0.0;
        for (rank0, &(_, rel)) in entries.iter().enumerate() {
            if rel {
                hits += 1;
                sum += hits as f64 / (rank0 + 1) as f64;
            }
        }
        let want = sum / hits as f64;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        // The corruption makes this a strict ranking exercise.
        assert!(got < 1.0);
    }

    #[test]
    fn naming_accuracy_counts_exact_matches() {
        let gt: BTreeMap<String, String> = [
            ("c1".into(), "A".into()),
            ("c2".into(), "other".into()),
            ("c3".into(), "B".into()),
            ("c4".into(), "other".into()),
        ]
        .into();
        assert_eq!(naming_accuracy(&gt, &gt).unwrap(), 1.0);
        let all_other: BTreeMap<String, String> =
            gt.keys().map(|k| (k.clone(), "other".to_string())).collect();
        assert_eq!(naming_accuracy(&gt, &all_other).unwrap(), 0.5);
        let mut missing = gt.clone();
        missing.remove("c1");
        assert!(naming_accuracy(&gt, &missing).is_err());
    }

    #[test]
    fn text_classification_ap_cases() {
        assert_eq!(
            text_classification_ap(&[true, false], &[1.0, 0.0]).unwrap(),
            1.0
        );
        // Inverted scores: worst ranking of TTFF.
        let ap = text_classification_ap(&[true, true, false, false], &[0.0, 0.0, 1.0, 1.0])
            .unwrap();
        assert!((ap - (1.0 / 3.0 + 2.0 / 4.0) / 2.0).abs() < 1e-12);
        // All essential: perfect regardless of scores.
        assert_eq!(
            text_classification_ap(&[true, true], &[0.1, 0.9]).unwrap(),
            1.0
        );
        assert!(text_classification_ap(&[], &[]).is_err());
    }

    fn eval_fixture() -> (Chapter, BTreeMap<String, String>, BTreeMap<String, String>) {
        // Noise-free two-page chapter: exact identity embeddings, indicator
        // edges, flags consistent with scores.
        let ch = Chapter::from_json_str(
            r#"{
                "embedding_dim": 2,
                "pages": [
                    {
                        "index": 0,
                        "characters": [
                            {"id": "c1", "bbox": [0, 0, 10, 10], "embedding": [1.0, 0.0], "gt_name": "A"},
                            {"id": "c2", "bbox": [20, 0, 30, 10], "embedding": [0.0, 1.0], "gt_name": "B"},
                            {"id": "c3", "bbox": [40, 0, 50, 10], "embedding": [1.0, 0.0], "gt_name": "A"}
                        ],
                        "texts": [
                            {"id": "t1", "bbox": [60, 0, 70, 10], "content": "x", "essential_score": 0.9, "gt_essential": true},
                            {"id": "t2", "bbox": [80, 0, 90, 10], "content": "y", "essential_score": 0.1, "gt_essential": false}
                        ],
                        "tails": [],
                        "panels": [{"id": "p1", "bbox": [0, 0, 100, 20]}],
                        "edges": {
                            "text_char": [["t1", "c1", 0.9], ["t1", "c2", 0.1], ["t1", "c3", 0.2],
                                          ["t2", "c1", 0.1], ["t2", "c2", 0.8], ["t2", "c3", 0.1]],
                            "char_char": [["c1", "c2", 0.1], ["c1", "c3", 0.9], ["c2", "c3", 0.1]]
                        }
                    },
                    {
                        "index": 1,
                        "characters": [
                            {"id": "c4", "bbox": [0, 0, 10, 10], "embedding": [0.0, 1.0], "gt_name": "B"},
                            {"id": "c5", "bbox": [20, 0, 30, 10], "embedding": [1.0, 0.0], "gt_name": "A"}
                        ],
                        "texts": [
                            {"id": "t3", "bbox": [40, 0, 50, 10], "content": "z", "essential_score": 0.8, "gt_essential": true}
                        ],
                        "tails": [],
                        "panels": [{"id": "p2", "bbox": [0, 0, 100, 20]}],
                        "edges": {
                            "text_char": [["t3", "c4", 0.95], ["t3", "c5", 0.05]],
                            "char_char": [["c4", "c5", 0.1]]
                        }
                    }
                ]
            }"#,
        )
        .unwrap();
        let names: BTreeMap<String, String> = [
            ("c1".into(), "A".into()),
            ("c2".into(), "B".into()),
            ("c3".into(), "A".into()),
            ("c4".into(), "B".into()),
            ("c5".into(), "A".into()),
        ]
        .into();
        let speakers: BTreeMap<String, String> = [
            ("t1".into(), "c1".into()),
            ("t2".into(), "c2".into()),
            ("t3".into(), "c4".into()),
        ]
        .into();
        (ch, names, speakers)
    }

    #[test]
    fn self_evaluation_scores_one_everywhere() {
        let (ch, names, speakers) = eval_fixture();
        let report = evaluate_chapter(&EvalInputs {
            gt: &ch,
            pred: &ch,
            gt_names: Some(&names),
            gt_speakers: Some(&speakers),
            naming: Some(&names),
            iou_min: 0.5,
            theta_ml: 0.5,
        })
        .unwrap();
        for (name, value) in &report.metrics {
            assert!(
                (value - 1.0).abs() < 1e-12,
                "metric {name} = {value}, expected 1.0"
            );
        }
        assert_eq!(report.counts["clustering_pages"], 2);
        assert_eq!(report.counts["retrieval_queries"], 5);
        assert_eq!(report.metrics.len(), 9, "all metric families emitted");
        assert_eq!(
            report.params["edge_ap_pooling"],
            serde_json::json!("page_present_identities")
        );
    }

    #[test]
    fn evaluation_without_naming_uses_edge_components() {
        let (ch, _, _) = eval_fixture();
        let report = evaluate_chapter(&EvalInputs {
            gt: &ch,
            pred: &ch,
            gt_names: None,
            gt_speakers: None,
            naming: None,
            iou_min: 0.5,
            theta_ml: 0.5,
        })
        .unwrap();
        assert_eq!(report.params["clustering_pred"], serde_json::json!("edge_components"));
        assert_eq!(report.metrics["clustering_ami"], 1.0);
        assert!(!report.metrics.contains_key("naming_accuracy"));
        assert!(!report.metrics.contains_key("edge_ap_text_char"));
    }

    #[test]
    fn evaluation_rejects_misaligned_chapters() {
        let (ch, names, speakers) = eval_fixture();
        let mut other = ch.clone();
        other.pages[0].characters[0].id = "zz".to_string();
        let err = evaluate_chapter(&EvalInputs {
            gt: &ch,
            pred: &other,
            gt_names: Some(&names),
            gt_speakers: Some(&speakers),
            naming: None,
            iou_min: 0.5,
            theta_ml: 0.5,
        })
        .unwrap_err();
        assert!(err.to_string().contains("misaligned id sets"), "{err}");
    }

    #[test]
    fn report_renders_and_merges() {
        let (ch, names, speakers) = eval_fixture();
        let inputs = EvalInputs {
            gt: &ch,
            pred: &ch,
            gt_names: Some(&names),
            gt_speakers: Some(&speakers),
            naming: Some(&names),
            iou_min: 0.5,
            theta_ml: 0.5,
        };
        let r1 = evaluate_chapter(&inputs).unwrap();
        let r2 = evaluate_chapter(&inputs).unwrap();
        let merged = merge_reports(&[r1.clone(), r2]).unwrap();
        assert_eq!(merged.counts["chapters"], 2);
        assert_eq!(merged.counts["crops"], 10);
        assert_eq!(merged.metrics["naming_accuracy"], 1.0);

        let json = merged.to_json_string();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(merged, back);

        let table = r1.render_table();
        assert!(table.contains("naming_accuracy"));
        assert!(table.contains("retrieval_map_at_r"));
        // Aligned columns: every row is equally wide.
        let widths: BTreeSet<usize> = table.lines().map(|l| l.len()).collect();
        assert_eq!(widths.len(), 1, "rows share one width:\n{table}");
        assert!(merge_reports(&[]).is_err());
    }
}

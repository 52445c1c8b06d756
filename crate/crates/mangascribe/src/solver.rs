//! Exact constrained assignment of crops to bank characters. Minimizes the
//! summed label cost subject to: one label per crop, must-linked crops share
//! a label, cannot-linked crops never share a named label (both may be
//! "other").
//!
//! Must-link components collapse into fragments whose cost row is the sum of
//! member rows. Fragments interact only through cannot-links, so the fragment
//! graph splits into independent components, each solved by depth-first
//! branch and bound. Labels are explored in preference order (character 0,
//! 1, ..., then "other") with strict-improvement acceptance, so the returned
//! optimum is the lexicographically smallest one under that preference: ties
//! go to the lower character index, named before "other", earlier fragments
//! deciding first. Fragments are ordered by decreasing size, then smallest
//! member id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::{CharacterBank, CostMatrix};
use crate::chapter::Chapter;
use crate::constraints::ConstraintSet;
use crate::error::Error;
use crate::Result;

/// Cap on brute-force enumeration states, (k+1)^fragments.
const BRUTE_FORCE_CAP: f64 = 1e7;

#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    pub crop_ids: Vec<String>,
    pub costs: CostMatrix,
    pub constraints: ConstraintSet,
}

impl AssignmentProblem {
    pub fn new(
        crop_ids: Vec<String>,
        costs: CostMatrix,
        constraints: ConstraintSet,
    ) -> Result<Self> {
        if crop_ids.len() != costs.rows.len() {
            return Err(Error::input(format!(
                "{} crop ids but {} cost rows",
                crop_ids.len(),
                costs.rows.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &crop_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate crop id {id:?}")));
            }
        }
        let width = costs.num_named + 1;
        for (i, row) in costs.rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::input(format!(
                    "cost row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::input(format!("cost row {i} has a negative or non-finite entry")));
            }
        }
        for id in constraints.mentioned_ids() {
            if !seen.contains(id) {
                return Err(Error::input(format!("constraint names unknown crop {id:?}")));
            }
        }
        Ok(AssignmentProblem {
            crop_ids,
            costs,
            constraints,
        })
    }

    /// Number of named characters (the "other" label is index `num_named`).
    pub fn num_named(&self) -> usize {
        self.costs.num_named
    }

    fn index_of(&self) -> BTreeMap<&str, usize> {
        self.crop_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Builds the standard problem for a chapter: rows in chapter crop order,
/// costs against the bank representatives.
pub fn chapter_problem(
    chapter: &Chapter,
    bank: &CharacterBank,
    constraints: &ConstraintSet,
) -> Result<AssignmentProblem> {
    let crops = chapter.crops();
    let embeddings: Vec<_> = crops.iter().map(|c| c.embedding.clone()).collect();
    let costs = bank.cost_matrix(&embeddings)?;
    AssignmentProblem::new(chapter.crop_ids(), costs, constraints.clone())
}

/// A must-link component: one label decision covering all members.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    /// Indices into the problem's crop order, ascending.
    pub members: Vec<usize>,
    /// Summed member cost rows.
    pub cost_row: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CollapsedProblem {
    /// Fragments in exploration order: decreasing size, then smallest
    /// member id.
    pub fragments: Vec<Fragment>,
    /// Cannot-links lifted to fragment index pairs, `i < j`.
    pub cannot: BTreeSet<(usize, usize)>,
}

/// Collapses must-link components into fragments and lifts cannot-links to
/// fragment pairs. A cannot-link inside one fragment is inconsistent.
pub fn collapse_fragments(problem: &AssignmentProblem) -> Result<CollapsedProblem> {
    let n = problem.crop_ids.len();
    let index_of = problem.index_of();

    // Union-find over crop indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in problem.constraints.must_pairs() {
        let (ia, ib) = (index_of[a.as_str()], index_of[b.as_str()]);
        let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    let width = problem.costs.num_named + 1;
    let mut fragments: Vec<Fragment> = groups
        .into_values()
        .map(|members| {
            let mut cost_row = vec![0.0; width];
            for &m in &members {
                for (c, v) in cost_row.iter_mut().zip(&problem.costs.rows[m]) {
                    *c += v;
                }
            }
            Fragment { members, cost_row }
        })
        .collect();

    fragments.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then_with(|| problem.crop_ids[a.members[0]].cmp(&problem.crop_ids[b.members[0]]))
    });

    let mut frag_of = vec![usize::MAX; n];
    for (fi, f) in fragments.iter().enumerate() {
        for &m in &f.members {
            frag_of[m] = fi;
        }
    }

    let mut cannot = BTreeSet::new();
    for (a, b) in problem.constraints.cannot_pairs() {
        let (fa, fb) = (frag_of[index_of[a.as_str()]], frag_of[index_of[b.as_str()]]);
        if fa == fb {
            return Err(Error::InconsistentConstraints(format!(
                "cannot-link ({a:?}, {b:?}) falls inside one must-link fragment"
            )));
        }
        cannot.insert((fa.min(fb), fa.max(fb)));
    }

    Ok(CollapsedProblem { fragments, cannot })
}

/// Solved labeling: `labels[crop] < num_named` names a bank character,
/// `labels[crop] == num_named` is "other".
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: BTreeMap<String, usize>,
    pub objective: f64,
}

impl Assignment {
    /// Label columns mapped through the bank to display names.
    pub fn to_name_map(&self, bank: &CharacterBank) -> BTreeMap<String, String> {
        self.labels
            .iter()
            .map(|(id, &l)| (id.clone(), bank.label_name(l).to_string()))
            .collect()
    }
}

/// Exact single-threaded solve. See [`solve_exact_jobs`] for the threaded
/// variant; both return identical assignments.
pub fn solve_exact(problem: &AssignmentProblem) -> Result<Assignment> {
    solve_exact_jobs(problem, 1)
}

/// Exact solve with independent cannot-link components distributed over
/// `jobs` worker threads. Results are merged in component order, so the
/// output does not depend on `jobs`.
pub fn solve_exact_jobs(problem: &AssignmentProblem, jobs: usize) -> Result<Assignment> {
    if jobs == 0 {
        return Err(Error::input("jobs must be at least 1"));
    }
    let collapsed = collapse_fragments(problem)?;
    let nf = collapsed.fragments.len();
    let k = problem.costs.num_named;

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for &(a, b) in &collapsed.cannot {
        adj[a].push(b);
        adj[b].push(a);
    }

    // Connected components of the fragment graph, each listed in
    // exploration order (ascending fragment index).
    let mut comp_of = vec![usize::MAX; nf];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..nf {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let ci = components.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        comp_of[start] = ci;
        while let Some(f) = stack.pop() {
            members.push(f);
            for &g in &adj[f] {
                if comp_of[g] == usize::MAX {
                    comp_of[g] = ci;
                    stack.push(g);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let mut frag_labels = vec![usize::MAX; nf];
    let workers = jobs.min(components.len()).max(1);
    if workers <= 1 {
        for comp in &components {
            solve_component(comp, &collapsed, &adj, k, &mut frag_labels);
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(vec![Vec::new(); components.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let ci = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if ci >= components.len() {
                        break;
                    }
                    let mut local = vec![usize::MAX; nf];
                    solve_component(&components[ci], &collapsed, &adj, k, &mut local);
                    let picked: Vec<(usize, usize)> = components[ci]
                        .iter()
                        .map(|&f| (f, local[f]))
                        .collect();
                    results.lock().unwrap()[ci] = picked;
                });
            }
        });
        for comp in results.into_inner().unwrap() {
            for (f, l) in comp {
                frag_labels[f] = l;
            }
        }
    }

    Ok(assemble(problem, &collapsed, &frag_labels))
}

/// Branch and bound over one cannot-link component. Writes the optimal
/// label of each member fragment into `out`.
fn solve_component(
    comp: &[usize],
    collapsed: &CollapsedProblem,
    adj: &[Vec<usize>],
    k: usize,
    out: &mut [usize],
) {
    let n = comp.len();
    let width = k + 1;
    // Position of each fragment within the component order.
    let mut pos_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (p, &f) in comp.iter().enumerate() {
        pos_of.insert(f, p);
    }
    // Neighbors expressed as component positions.
    let local_adj: Vec<Vec<usize>> = comp
        .iter()
        .map(|&f| adj[f].iter().map(|g| pos_of[g]).collect())
        .collect();
    let costs: Vec<&[f64]> = comp
        .iter()
        .map(|&f| collapsed.fragments[f].cost_row.as_slice())
        .collect();

    struct State<'a> {
        n: usize,
        k: usize,
        width: usize,
        costs: Vec<&'a [f64]>,
        local_adj: &'a [Vec<usize>],
        // forbid[p * width + l]: how many assigned neighbors hold named label l.
        forbid: Vec<u32>,
        labels: Vec<usize>,
        best_cost: f64,
        best_labels: Vec<usize>,
    }

    impl State<'_> {
        fn min_feasible(&self, p: usize) -> f64 {
            let mut best = self.costs[p][self.k]; // "other" is always open
            for l in 0..self.k {
                if self.forbid[p * self.width + l] == 0 && self.costs[p][l] < best {
                    best = self.costs[p][l];
                }
            }
            best
        }

        fn dfs(&mut self, p: usize, cur: f64) {
            if p == self.n {
                if cur < self.best_cost {
                    self.best_cost = cur;
                    self.best_labels = self.labels.clone();
                }
                return;
            }
            // Admissible bound: forbids only grow, so per-fragment feasible
            // minima only rise. Strict comparison keeps the first-found
            // (lexicographically smallest) optimum.
            let mut bound = cur;
            for q in p..self.n {
                bound += self.min_feasible(q);
            }
            if bound >= self.best_cost {
                return;
            }
            for l in 0..self.width {
                if l < self.k && self.forbid[p * self.width + l] > 0 {
                    continue;
                }
                self.labels[p] = l;
                if l < self.k {
                    for &q in &self.local_adj[p] {
                        if q > p {
                            self.forbid[q * self.width + l] += 1;
                        }
                    }
                }
                self.dfs(p + 1, cur + self.costs[p][l]);
                if l < self.k {
                    for &q in &self.local_adj[p] {
                        if q > p {
                            self.forbid[q * self.width + l] -= 1;
                        }
                    }
                }
            }
            self.labels[p] = usize::MAX;
        }
    }

    let mut st = State {
        n,
        k,
        width,
        costs,
        local_adj: &local_adj,
        forbid: vec![0; n * width],
        labels: vec![usize::MAX; n],
        best_cost: f64::INFINITY,
        best_labels: Vec::new(),
    };
    st.dfs(0, 0.0);
    for (p, &f) in comp.iter().enumerate() {
        out[f] = st.best_labels[p];
    }
}

/// Exhaustive reference solver: enumerates every label vector over the
/// fragments in the same exploration order and keeps the first strict
/// improvement, hence the same tie-break as [`solve_exact`]. Refuses
/// instances beyond (k+1)^fragments = 1e7 states.
pub fn solve_bruteforce(problem: &AssignmentProblem) -> Result<Assignment> {
    let collapsed = collapse_fragments(problem)?;
    let nf = collapsed.fragments.len();
    let width = problem.costs.num_named + 1;
    let states = (width as f64).powi(nf as i32);
    if states > BRUTE_FORCE_CAP {
        return Err(Error::InstanceTooLarge(format!(
            "{width}^{nf} label vectors exceed the brute-force cap"
        )));
    }
    let k = problem.costs.num_named;
    let cannot: Vec<(usize, usize)> = collapsed.cannot.iter().copied().collect();

    let mut labels = vec![0usize; nf];
    let mut best_cost = f64::INFINITY;
    let mut best_labels = vec![width; nf];
    loop {
        let feasible = cannot
            .iter()
            .all(|&(a, b)| !(labels[a] == labels[b] && labels[a] < k));
        if feasible {
            let cost: f64 = labels
                .iter()
                .enumerate()
                .map(|(f, &l)| collapsed.fragments[f].cost_row[l])
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best_labels.copy_from_slice(&labels);
            }
        }
        // Odometer with the last fragment fastest: visits vectors in
        // lexicographic order over (labels[0], labels[1], ...).
        let mut p = nf;
        loop {
            if p == 0 {
                return Ok(assemble(problem, &collapsed, &best_labels));
            }
            p -= 1;
            labels[p] += 1;
            if labels[p] < width {
                break;
            }
            labels[p] = 0;
        }
    }
}

fn assemble(
    problem: &AssignmentProblem,
    collapsed: &CollapsedProblem,
    frag_labels: &[usize],
) -> Assignment {
    let mut labels = BTreeMap::new();
    let mut objective = 0.0;
    for (f, frag) in collapsed.fragments.iter().enumerate() {
        let l = frag_labels[f];
        objective += frag.cost_row[l];
        for &m in &frag.members {
            labels.insert(problem.crop_ids[m].clone(), l);
        }
    }
    Assignment { labels, objective }
}

/// Checks an assignment against the problem: every crop labeled in range,
/// must-links share labels, cannot-links never share a named label.
/// A label for an unknown crop is an error, not a `false`.
pub fn verify(problem: &AssignmentProblem, assignment: &Assignment) -> Result<bool> {
    let known: BTreeSet<&str> = problem.crop_ids.iter().map(|s| s.as_str()).collect();
    for id in assignment.labels.keys() {
        if !known.contains(id.as_str()) {
            return Err(Error::input(format!("assignment labels unknown crop {id:?}")));
        }
    }
    let k = problem.costs.num_named;
    for id in &problem.crop_ids {
        match assignment.labels.get(id) {
            Some(&l) if l <= k => {}
            _ => return Ok(false),
        }
    }
    for (a, b) in problem.constraints.must_pairs() {
        if assignment.labels[a] != assignment.labels[b] {
            return Ok(false);
        }
    }
    for (a, b) in problem.constraints.cannot_pairs() {
        let (la, lb) = (assignment.labels[a], assignment.labels[b]);
        if la == lb && la < k {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Cost of an arbitrary naming under the bank's model: distance to the
/// named character's representative per crop, eta for "other". The naming
/// must cover exactly the chapter's crops and use only bank names.
pub fn naming_objective(
    chapter: &Chapter,
    bank: &CharacterBank,
    naming: &BTreeMap<String, String>,
) -> Result<f64> {
    let crops = chapter.crops();
    if naming.len() != crops.len() {
        return Err(Error::input(format!(
            "naming covers {} crops, chapter has {}",
            naming.len(),
            crops.len()
        )));
    }
    let reps: BTreeMap<&str, usize> = bank
        .names()
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let mut total = 0.0;
    for crop in crops {
        let name = naming
            .get(&crop.id)
            .ok_or_else(|| Error::input(format!("naming misses crop {:?}", crop.id)))?;
        if name == "other" {
            total += bank.eta;
        } else {
            let &i = reps
                .get(name.as_str())
                .ok_or_else(|| Error::input(format!("name {name:?} is not in the bank")))?;
            total += crop.embedding.distance(bank.representative(i)?);
        }
    }
    Ok(total)
}

/// On-disk result of a naming run: crop id to display name, plus the
/// objective value reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDocument {
    pub assignments: BTreeMap<String, String>,
    pub objective: f64,
}

impl AssignmentDocument {
    pub fn new(assignment: &Assignment, bank: &CharacterBank) -> Self {
        AssignmentDocument {
            assignments: assignment.to_name_map(bank),
            objective: assignment.objective,
        }
    }

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

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::CostMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn problem(
        crop_ids: &[&str],
        rows: Vec<Vec<f64>>,
        num_named: usize,
        must: &[(&str, &str)],
        cannot: &[(&str, &str)],
    ) -> AssignmentProblem {
        let eta = rows.first().map(|r| r[num_named]).unwrap_or(0.75);
        let constraints = ConstraintSet::build(
            must.iter().map(|(a, b)| (a.to_string(), b.to_string())),
            cannot.iter().map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap();
        AssignmentProblem::new(
            ids(crop_ids),
            CostMatrix {
                rows,
                num_named,
                eta,
            },
            constraints,
        )
        .unwrap()
    }

    #[test]
    fn cannot_link_forces_distinct_names() {
        // Both crops prefer character 0; the cannot-link pushes the second
        // to character 1. (c0, c1) beats (c1, c0) by the tie... not a tie
        // here: 0.1 + 0.6 in either order, but crop "1" decides first and
        // takes its cheapest feasible label.
        let p = problem(
            &["1", "2"],
            vec![vec![0.1, 0.6, 0.75], vec![0.1, 0.6, 0.75]],
            2,
            &[],
            &[("1", "2")],
        );
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.labels["1"], 0);
        assert_eq!(a.labels["2"], 1);
        assert!((a.objective - 0.7).abs() < 1e-12);
        assert!(verify(&p, &a).unwrap());
    }

    #[test]
    fn must_link_shares_one_label() {
        let p = problem(
            &["1", "2"],
            vec![vec![0.1, 0.6, 0.75], vec![0.5, 0.2, 0.75]],
            2,
            &[("1", "2")],
            &[],
        );
        let a = solve_exact(&p).unwrap();
        // Fragment row [0.6, 0.8, 1.5]: character 0 wins jointly even though
        // crop "2" alone prefers character 1.
        assert_eq!(a.labels["1"], 0);
        assert_eq!(a.labels["2"], 0);
        assert!((a.objective - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_bank_sends_everything_to_other() {
        let p = problem(&["1", "2", "3"], vec![vec![0.75]; 3], 0, &[], &[]);
        let a = solve_exact(&p).unwrap();
        assert!(a.labels.values().all(|&l| l == 0));
        assert!((a.objective - 2.25).abs() < 1e-12);
    }

    #[test]
    fn other_label_absorbs_cannot_link_overflow() {
        // Three mutually cannot-linked crops, one named character: two crops
        // must take "other", and "other" may repeat.
        let p = problem(
            &["1", "2", "3"],
            vec![vec![0.2, 0.75], vec![0.3, 0.75], vec![0.4, 0.75]],
            1,
            &[],
            &[("1", "2"), ("1", "3"), ("2", "3")],
        );
        let a = solve_exact(&p).unwrap();
        assert!(verify(&p, &a).unwrap());
        // Cheapest: give the named slot to crop 1 (0.2), others pay eta.
        assert_eq!(a.labels["1"], 0);
        assert_eq!(a.labels["2"], 1);
        assert_eq!(a.labels["3"], 1);
        assert!((a.objective - 1.7).abs() < 1e-12);
    }

    #[test]
    fn eta_caps_bad_matches() {
        let p = problem(&["1"], vec![vec![0.9, 0.8, 0.75]], 2, &[], &[]);
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.labels["1"], 2);
        assert!((a.objective - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_lower_index_then_named_over_other() {
        let p = problem(&["1"], vec![vec![0.5, 0.5, 0.75]], 2, &[], &[]);
        assert_eq!(solve_exact(&p).unwrap().labels["1"], 0);
        let p = problem(&["1"], vec![vec![0.75, 0.8, 0.75]], 2, &[], &[]);
        assert_eq!(solve_exact(&p).unwrap().labels["1"], 0);
    }

    #[test]
    fn fragment_order_is_size_then_smallest_id() {
        let p = problem(
            &["x", "a", "b"],
            vec![vec![0.1, 0.75]; 3],
            1,
            &[("a", "x")],
            &[],
        );
        let c = collapse_fragments(&p).unwrap();
        // {a, x} first (larger), then {b}.
        assert_eq!(c.fragments.len(), 2);
        assert_eq!(c.fragments[0].members, vec![0, 1]); // crop order x, a
        assert_eq!(c.fragments[1].members, vec![2]);
        assert!((c.fragments[0].cost_row[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_pairs_never_reach_the_solver() {
        // A pair in both sets is rejected when the constraint set is built;
        // collapse_fragments keeps its own guard for defense in depth.
        let merged = ConstraintSet::build(
            vec![("1".to_string(), "2".to_string())],
            vec![("1".to_string(), "2".to_string())],
        );
        assert!(matches!(merged, Err(Error::InconsistentConstraints(_))));
    }

    #[test]
    fn bruteforce_guard_trips() {
        let n = 30;
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4, 0.75]; n];
        let ids: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
        let p = AssignmentProblem::new(
            ids,
            CostMatrix {
                rows,
                num_named: 4,
                eta: 0.75,
            },
            ConstraintSet::empty(),
        )
        .unwrap();
        // 5^30 states.
        assert!(matches!(
            solve_bruteforce(&p),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn verify_flags_each_violation() {
        let p = problem(
            &["1", "2", "3"],
            vec![vec![0.2, 0.75]; 3],
            1,
            &[("1", "2")],
            &[("1", "3")],
        );
        let good = solve_exact(&p).unwrap();
        assert!(verify(&p, &good).unwrap());

        let mut broken_must = good.clone();
        broken_must.labels.insert("2".into(), 1);
        assert!(!verify(&p, &broken_must).unwrap());

        let mut broken_cannot = good.clone();
        // good: 1->0, 2->0, 3->1. Give 3 the same named label as 1.
        broken_cannot.labels.insert("3".into(), 0);
        assert!(!verify(&p, &broken_cannot).unwrap());

        let mut missing = good.clone();
        missing.labels.remove("3");
        assert!(!verify(&p, &missing).unwrap());

        let mut out_of_range = good.clone();
        out_of_range.labels.insert("3".into(), 9);
        assert!(!verify(&p, &out_of_range).unwrap());

        let mut unknown = good;
        unknown.labels.insert("zz".into(), 0);
        assert!(verify(&p, &unknown).is_err());
    }

    /// Random consistent instances: random partition supplies must-links,
    /// cross-partition pairs sampled as cannot-links. Exact solver must
    /// equal the exhaustive one, labels and objective both.
    #[test]
    fn exact_matches_bruteforce_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..200 {
            let n = rng.gen_range(1..=8);
            let k = rng.gen_range(0..=3);
            let eta = rng.gen_range(0.1..1.0);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut r: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
                    r.push(eta);
                    r
                })
                .collect();
            let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            // Random identity partition keeps the constraints consistent.
            let identity: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let mut must = Vec::new();
            let mut cannot = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if identity[i] == identity[j] {
                        if rng.gen_bool(0.5) {
                            must.push((ids[i].clone(), ids[j].clone()));
                        }
                    } else if rng.gen_bool(0.5) {
                        cannot.push((ids[i].clone(), ids[j].clone()));
                    }
                }
            }
            let constraints = ConstraintSet::build(must, cannot).unwrap();
            let p = AssignmentProblem::new(
                ids,
                CostMatrix {
                    rows,
                    num_named: k,
                    eta,
                },
                constraints,
            )
            .unwrap();
            let fast = solve_exact(&p).unwrap();
            let slow = solve_bruteforce(&p).unwrap();
            assert_eq!(fast.labels, slow.labels, "case {case}");
            assert!(
                (fast.objective - slow.objective).abs() < 1e-9,
                "case {case}: {} vs {}",
                fast.objective,
                slow.objective
            );
            assert!(verify(&p, &fast).unwrap(), "case {case}");
        }
    }

    #[test]
    fn jobs_do_not_change_the_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let k = 3;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
                r.push(0.75);
                r
            })
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
        let mut cannot = Vec::new();
        for g in 0..10 {
            // Cliques of four: ten independent components.
            for i in 0..4 {
                for j in (i + 1)..4 {
                    cannot.push((ids[g * 4 + i].clone(), ids[g * 4 + j].clone()));
                }
            }
        }
        let p = AssignmentProblem::new(
            ids,
            CostMatrix {
                rows,
                num_named: k,
                eta: 0.75,
            },
            ConstraintSet::build(Vec::<(String, String)>::new(), cannot).unwrap(),
        )
        .unwrap();
        let one = solve_exact_jobs(&p, 1).unwrap();
        let four = solve_exact_jobs(&p, 4).unwrap();
        assert_eq!(one.labels, four.labels);
        assert_eq!(one.objective, four.objective);
    }

    #[test]
    fn assignment_document_round_trips() {
        let doc = AssignmentDocument {
            assignments: [("c1".to_string(), "alice".to_string())].into(),
            objective: 0.25,
        };
        let parsed: AssignmentDocument =
            serde_json::from_str(&doc.to_json_string()).unwrap();
        assert_eq!(doc, parsed);
    }
}

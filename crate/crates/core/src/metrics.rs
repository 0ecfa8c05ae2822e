//! Cut quality measures: fitness, the three smoothness measures, the
//! Hungarian assignment, the DOI baseline and the per-step report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dcm::DcmParams;
use crate::error::{Error, Result};
use crate::model::{count_cuts, DocumentStore, FocusSet, TopicTree, TreeCut, TreeMapping};
use crate::treecut::{self, CutParams, CutState, Move, SearchObjective};
use crate::vecmath::dot;

/// `log F = −E1 + Σ_i log p(D_fi | φ)`; the prior is not part of fitness.
pub fn fitness(
    tree: &TopicTree,
    cut: &TreeCut,
    foci: &FocusSet,
    store: &DocumentStore,
    dcm: &DcmParams,
    params: &CutParams,
) -> Result<f64> {
    let e1 = treecut::energy_e1(tree, cut, params)?;
    Ok(-e1 + treecut::cut_log_likelihood(tree, cut, foci, store, dcm)?)
}

pub fn smoothness_map(cut_t: &TreeCut, cut_prev: &TreeCut, mapping: &TreeMapping) -> f64 {
    // `+ 0.0` folds a negative zero.
    -treecut::energy_e2(cut_t, cut_prev, mapping) + 0.0
}

// ---------------------------------------------------------------------------
// Hungarian assignment

/// O(n³) shortest augmenting path with potentials. Returns the row→column
/// assignment and the row and column potentials.
fn kuhn_munkres(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row (1-based) assigned to column j; column 0 is a sentinel.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

fn assignment_cost(cost: &[Vec<f64>], assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Minimum-cost perfect assignment of a square matrix. Among optimal
/// assignments the lexicographically smallest permutation is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if let Some(row) = cost.iter().find(|r| r.len() != n) {
        return Err(Error::NonSquare { rows: n, cols: row.len() });
    }
    if cost.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let (mut assign, u, v) = kuhn_munkres(cost);
    let total = assignment_cost(cost, &assign);
    let scale: f64 = cost.iter().flatten().map(|x| x.abs()).fold(1.0, f64::max);
    let tol = 1e-9 * scale * n as f64;

    // Fix rows in order, moving each to the smallest column that still
    // admits an optimal completion. Only columns with zero reduced cost can.
    let mut used = vec![false; n];
    let mut prefix = 0.0;
    for i in 0..n {
        for j in 0..assign[i] {
            if used[j] || (cost[i][j] - u[i] - v[j]).abs() > tol {
                continue;
            }
            let rows: Vec<usize> = (i + 1..n).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| !used[c] && c != j).collect();
            let sub: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| cost[r][c]).collect()).collect();
            let (sa, _, _) = if sub.is_empty() { (Vec::new(), Vec::new(), Vec::new()) } else { kuhn_munkres(&sub) };
            let rest = assignment_cost(&sub, &sa);
            if prefix + cost[i][j] + rest <= total + tol {
                assign[i] = j;
                for (k, &r) in rows.iter().enumerate() {
                    assign[r] = cols[sa[k]];
                }
                break;
            }
        }
        used[assign[i]] = true;
        prefix += cost[i][assign[i]];
    }
    Ok((assign.clone(), assignment_cost(cost, &assign)))
}

// ---------------------------------------------------------------------------
// NMI over aligned documents

/// Documents of `tree` keyed to the cut node that contains them.
fn membership(tree: &TopicTree, cut: &TreeCut) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for id in &cut.cut_nodes {
        let node = tree.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
        for d in &node.doc_ids {
            out.insert(d.clone(), id.clone());
        }
    }
    Ok(out)
}

/// Composes consecutive document pairings into `(doc at first time, doc at
/// last time)` pairs by relational join.
pub fn compose_alignment(mappings: &[&TreeMapping]) -> BTreeSet<(String, String)> {
    let Some((first, rest)) = mappings.split_first() else {
        return BTreeSet::new();
    };
    let mut pairs: BTreeSet<(String, String)> = first.doc_pairs.iter().map(|p| (p.from.clone(), p.to.clone())).collect();
    for m in rest {
        let mut next: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for p in &m.doc_pairs {
            next.entry(p.from.as_str()).or_default().push(p.to.as_str());
        }
        pairs = pairs
            .iter()
            .flat_map(|(a, b)| next.get(b.as_str()).into_iter().flatten().map(move |c| (a.clone(), c.to_string())))
            .collect();
    }
    pairs
}

/// Normalized mutual information with the conventions 1 when both
/// partitions are trivial and 0 when exactly one is.
pub fn nmi(labels_a: &[usize], labels_b: &[usize]) -> f64 {
    let n = labels_a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *joint.entry((a, b)).or_default() += 1.0;
        *pa.entry(a).or_default() += 1.0;
        *pb.entry(b).or_default() += 1.0;
    }
    let entropy = |m: &BTreeMap<usize, f64>| -m.values().map(|&c| (c / n) * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    let zero = 1e-15;
    match (ha <= zero, hb <= zero) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mi: f64 = joint.iter().map(|(&(a, b), &c)| (c / n) * ((c * n) / (pa[&a] * pb[&b])).ln()).sum();
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmiResult {
    pub nmi: f64,
    /// Cut node pairs `(at k, at t)` of the maximum-overlap matching.
    pub correspondence: Vec<(String, String)>,
    pub aligned_docs: usize,
}

/// NMI between the cut partitions of the aligned documents, with the
/// Hungarian correspondence of the two cuts' clusters.
pub fn smoothness_nmi(
    tree_t: &TopicTree,
    cut_t: &TreeCut,
    tree_k: &TopicTree,
    cut_k: &TreeCut,
    alignment: &BTreeSet<(String, String)>,
) -> Result<NmiResult> {
    let mem_t = membership(tree_t, cut_t)?;
    let mem_k = membership(tree_k, cut_k)?;
    let mut ids_a: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ids_b: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    for (dk, dt) in alignment {
        let (Some(a), Some(b)) = (mem_k.get(dk), mem_t.get(dt)) else { continue };
        let na = ids_a.len();
        la.push(*ids_a.entry(a.as_str()).or_insert(na));
        let nb = ids_b.len();
        lb.push(*ids_b.entry(b.as_str()).or_insert(nb));
    }
    if la.is_empty() {
        return Err(Error::EmptyAlignment);
    }
    let value = nmi(&la, &lb);

    let size = ids_a.len().max(ids_b.len());
    let mut overlap = vec![vec![0.0; size]; size];
    for (&a, &b) in la.iter().zip(&lb) {
        overlap[a][b] -= 1.0;
    }
    let (assign, _) = hungarian(&overlap)?;
    let name_a: BTreeMap<usize, &str> = ids_a.iter().map(|(k, &v)| (v, *k)).collect();
    let name_b: BTreeMap<usize, &str> = ids_b.iter().map(|(k, &v)| (v, *k)).collect();
    let mut correspondence: Vec<(String, String)> = assign
        .iter()
        .enumerate()
        .filter(|&(a, &b)| overlap[a][b] < 0.0)
        .filter_map(|(a, b)| Some((name_a.get(&a)?.to_string(), name_b.get(b)?.to_string())))
        .collect();
    correspondence.sort();
    Ok(NmiResult { nmi: value, correspondence, aligned_docs: la.len() })
}

// ---------------------------------------------------------------------------
// Tree distance

/// Follows the highest-weight topic pair at each step (ties: smallest id).
fn follow(id: &str, mapping: &TreeMapping, forward: bool) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for p in &mapping.topic_pairs {
        let (src, dst) = if forward { (&p.from, &p.to) } else { (&p.to, &p.from) };
        if src != id {
            continue;
        }
        let better = match best {
            None => true,
            Some((w, d)) => p.weight > w || (p.weight == w && dst.as_str() < d),
        };
        if better {
            best = Some((p.weight, dst.as_str()));
        }
    }
    best.map(|(_, d)| d.to_string())
}

/// Maps a node of the tree at the end of `chain` back to its start, or
/// forward from the start to the end.
pub fn map_node(id: &str, chain: &[&TreeMapping], forward: bool) -> Option<String> {
    let mut cur = id.to_string();
    if forward {
        for m in chain {
            cur = follow(&cur, m, true)?;
        }
    } else {
        for m in chain.iter().rev() {
            cur = follow(&cur, m, false)?;
        }
    }
    Some(cur)
}

/// Mean squared path-distance change over unordered pairs of `cut` nodes
/// mapped into `other`; 0 with fewer than two mappable nodes.
fn distance_term(
    tree: &TopicTree,
    cut: &TreeCut,
    other: &TopicTree,
    map: &dyn Fn(&str) -> Option<String>,
) -> Result<f64> {
    let mut nodes = Vec::new();
    for id in &cut.cut_nodes {
        let Some(m) = map(id) else { continue };
        let Some(j) = other.index_of(&m) else { continue };
        nodes.push((tree.require_index(id)?, j));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let d_here = tree.path_distance(nodes[a].0, nodes[b].0) as f64;
            let d_there = other.path_distance(nodes[a].1, nodes[b].1) as f64;
            sum += (d_here - d_there).powi(2);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Tree-distance smoothness between the cut at `t` and the cut at `k < t`.
/// `chain` holds the mappings `k→k+1, …, t−1→t`.
pub fn smoothness_dist(
    cut_t: &TreeCut,
    cut_k: &TreeCut,
    tree_t: &TopicTree,
    tree_k: &TopicTree,
    chain: &[&TreeMapping],
) -> Result<f64> {
    let back = |id: &str| map_node(id, chain, false);
    let fwd = |id: &str| map_node(id, chain, true);
    let a = distance_term(tree_t, cut_t, tree_k, &back)?;
    let b = distance_term(tree_k, cut_k, tree_t, &fwd)?;
    Ok(-(a + b) / 2.0 + 0.0)
}

// ---------------------------------------------------------------------------
// DOI baseline

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoiParams {
    pub tree_decay: f64,
    pub time_decay: f64,
    pub budget_lambda: f64,
}

impl Default for DoiParams {
    fn default() -> Self {
        Self { tree_decay: 0.7, time_decay: 0.5, budget_lambda: 0.5 }
    }
}

impl DoiParams {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("tree_decay", self.tree_decay), ("time_decay", self.time_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::BadParams(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.budget_lambda >= 0.0) {
            return Err(Error::BadParams(format!("budget_lambda must be >= 0, got {}", self.budget_lambda)));
        }
        Ok(())
    }
}

/// Degree of interest per node id.
pub type DoiValues = BTreeMap<String, f64>;

/// Focus similarity spread through the tree with factor `ρ` per edge, then
/// raised by `ρ_t` times the interest of mapped previous nodes.
pub fn doi_values(
    tree: &TopicTree,
    prev: Option<(&DoiValues, &TreeMapping)>,
    focus: &[Vec<f64>],
    params: &DoiParams,
) -> Vec<f64> {
    let n = tree.len();
    let mut doi: Vec<f64> =
        tree.nodes().iter().map(|node| focus.iter().map(|f| dot(&node.centroid, f)).fold(0.0, f64::max)).collect();
    // Preorder storage: children follow parents, so one upward and one
    // downward sweep reach the max over all nodes of ρ^distance · seed.
    let rho = params.tree_decay;
    for v in (0..n).rev() {
        if let Some(p) = tree.parent(v) {
            doi[p] = doi[p].max(rho * doi[v]);
        }
    }
    for v in 0..n {
        if let Some(p) = tree.parent(v) {
            doi[v] = doi[v].max(rho * doi[p]);
        }
    }
    if let Some((prev_doi, mapping)) = prev {
        let mut boost = vec![0.0f64; n];
        for pair in &mapping.topic_pairs {
            if let (Some(v), Some(&d)) = (tree.index_of(&pair.to), prev_doi.get(&pair.from)) {
                boost[v] = boost[v].max(d);
            }
        }
        for v in 0..n {
            doi[v] = doi[v].max(params.time_decay * boost[v]);
        }
    }
    doi
}

/// Cut objective `Σ_{v∈C} w_v`.
struct Additive<'t> {
    tree: &'t TopicTree,
    weights: Vec<f64>,
}

impl SearchObjective for Additive<'_> {
    type State = f64;

    fn init(&self, cut: &CutState) -> f64 {
        cut.in_cut.iter().zip(&self.weights).filter(|(&c, _)| c).map(|(_, w)| w).sum()
    }

    fn delta(&self, _st: &mut f64, _cut: &CutState, mv: Move) -> f64 {
        let kids: f64 = self.tree.children(mv.pivot()).iter().map(|&c| self.weights[c]).sum();
        match mv {
            Move::Expand(v) => kids - self.weights[v],
            Move::Collapse(p) => self.weights[p] - kids,
        }
    }

    fn apply(&self, st: &mut f64, cut: &CutState, mv: Move) {
        *st += self.delta(&mut 0.0, cut, mv);
    }

    fn total(&self, st: &f64) -> f64 {
        *st
    }

    fn score(&self, cut: &[usize], _labels: &[u8]) -> f64 {
        cut.iter().map(|&v| self.weights[v]).sum()
    }
}

/// Baseline cut maximizing `Σ_{v∈C} DOI(v) − budget·|C|`, with the same
/// exact-or-local search as the streaming solver. Returns the cut and the
/// interest values for the next step.
pub fn doi_baseline_cut(
    tree: &TopicTree,
    prev: Option<(&DoiValues, &TreeMapping)>,
    focus: &[Vec<f64>],
    doi_params: &DoiParams,
    cut_params: &CutParams,
) -> Result<(TreeCut, DoiValues)> {
    doi_params.check()?;
    cut_params.check()?;
    let doi = doi_values(tree, prev, focus, doi_params);
    let obj = Additive { tree, weights: doi.iter().map(|d| d - doi_params.budget_lambda).collect() };
    let limit = u128::from(cut_params.max_enumeration);
    let cut = if count_cuts(tree) <= limit {
        treecut::exact(tree, &obj, limit)?.0
    } else {
        treecut::multi_start(tree, &obj, &[0], cut_params.restarts, cut_params.rng_seed).cut
    };
    let values = tree.nodes().iter().zip(&doi).map(|(n, &d)| (n.id.clone(), d)).collect();
    Ok((TreeCut::from_indices(tree, &cut), values))
}

// ---------------------------------------------------------------------------
// Report

/// One row per time step; measures that do not apply are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "S_map")]
    pub s_map: Option<f64>,
    #[serde(rename = "S_NMI@1")]
    pub s_nmi_1: Option<f64>,
    #[serde(rename = "S_NMI@2")]
    pub s_nmi_2: Option<f64>,
    #[serde(rename = "S_NMI@3")]
    pub s_nmi_3: Option<f64>,
    #[serde(rename = "S_dist@1")]
    pub s_dist_1: Option<f64>,
    #[serde(rename = "S_dist@2")]
    pub s_dist_2: Option<f64>,
    #[serde(rename = "S_dist@3")]
    pub s_dist_3: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

/// Evaluates a cut sequence. `mappings[i]` links tree `i` to tree `i + 1`.
pub fn evaluate(
    trees: &[TopicTree],
    cuts: &[TreeCut],
    mappings: &[TreeMapping],
    foci: &FocusSet,
    store: &DocumentStore,
    dcm: &DcmParams,
    params: &CutParams,
) -> Result<MetricReport> {
    if cuts.len() != trees.len() || mappings.len() + 1 < trees.len() {
        return Err(Error::BadParams(format!(
            "{} trees need as many cuts (got {}) and {} mappings (got {})",
            trees.len(),
            cuts.len(),
            trees.len().saturating_sub(1),
            mappings.len()
        )));
    }
    let mut rows = Vec::with_capacity(trees.len());
    for t in 0..trees.len() {
        let f = fitness(&trees[t], &cuts[t], foci, store, dcm, params)?;
        let s_map = (t >= 1).then(|| smoothness_map(&cuts[t], &cuts[t - 1], &mappings[t - 1]));
        let mut nmi_k = [None; 3];
        let mut dist_k = [None; 3];
        for k in 1..=3 {
            if t < k {
                continue;
            }
            let chain: Vec<&TreeMapping> = mappings[t - k..t].iter().collect();
            let align = compose_alignment(&chain);
            nmi_k[k - 1] = match smoothness_nmi(&trees[t], &cuts[t], &trees[t - k], &cuts[t - k], &align) {
                Ok(r) => Some(r.nmi),
                Err(Error::EmptyAlignment) => None,
                Err(e) => return Err(e),
            };
            dist_k[k - 1] = Some(smoothness_dist(&cuts[t], &cuts[t - k], &trees[t], &trees[t - k], &chain)?);
        }
        rows.push(MetricRow {
            t,
            f,
            s_map,
            s_nmi_1: nmi_k[0],
            s_nmi_2: nmi_k[1],
            s_nmi_3: nmi_k[2],
            s_dist_1: dist_k[0],
            s_dist_2: dist_k[1],
            s_dist_3: dist_k[2],
        });
    }
    Ok(MetricReport { rows })
}

impl MetricReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Domain(e.to_string()))?;
        }
        if self.rows.is_empty() {
            w.write_record(["t", "F", "S_map", "S_NMI@1", "S_NMI@2", "S_NMI@3", "S_dist@1", "S_dist@2", "S_dist@3"])
                .map_err(|e| Error::Domain(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Column means over the rows where each measure is defined.
    pub fn means(&self) -> MetricMeans {
        fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
            let v: Vec<f64> = xs.flatten().collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        }
        MetricMeans {
            f: mean(self.rows.iter().map(|r| Some(r.f))),
            s_map: mean(self.rows.iter().map(|r| r.s_map)),
            s_nmi_1: mean(self.rows.iter().map(|r| r.s_nmi_1)),
            s_dist_1: mean(self.rows.iter().map(|r| r.s_dist_1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricMeans {
    pub f: Option<f64>,
    pub s_map: Option<f64>,
    pub s_nmi_1: Option<f64>,
    pub s_dist_1: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::tree_from_spec;
    use crate::model::{make_cut, DocPair, Focus, NodeRef, TopicPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn brute_min(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.len()])
    }

    #[test]
    fn hungarian_cases() {
        let (a, c) = hungarian(&[vec![0.0, 5.0], vec![5.0, 0.0]]).unwrap();
        assert_eq!((a, c), (vec![0, 1], 0.0));
        let (a, c) = hungarian(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!((a, c), (vec![1, 0], 4.0));
        assert!(matches!(hungarian(&[vec![1.0, 2.0]]), Err(Error::NonSquare { rows: 1, cols: 2 })));
        assert_eq!(hungarian(&[]).unwrap(), (vec![], 0.0));
    }

    #[test]
    fn hungarian_lexicographic_ties() {
        // Every permutation costs the same.
        let (a, _) = hungarian(&vec![vec![1.0; 4]; 4]).unwrap();
        assert_eq!(a, vec![0, 1, 2, 3]);
        let (a, c) = hungarian(&[vec![1.0, 1.0, 9.0], vec![1.0, 1.0, 9.0], vec![9.0, 9.0, 1.0]]).unwrap();
        assert_eq!((a, c), (vec![0, 1, 2], 3.0));
        // Row 1 forces column 0, so the zero-cost optimum is unique.
        let (a, c) = hungarian(&[vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!((a, c), (vec![1, 0, 2], 0.0));
    }

    #[test]
    fn hungarian_beats_random_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let (_, c) = hungarian(&cost).unwrap();
            assert!((c - brute_min(&cost)).abs() < 1e-9);
        }
    }

    #[test]
    fn nmi_cases() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]), 0.0);
        assert_eq!(nmi(&[0, 0], &[3, 3]), 1.0);
        let a = [0, 0, 1, 1, 2, 2, 2];
        let b = [0, 1, 1, 1, 2, 0, 2];
        assert!((nmi(&a, &b) - nmi(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn alignment_composes() {
        let mut m1 = TreeMapping::empty(0);
        m1.to_time = 1;
        m1.doc_pairs = vec![DocPair { from: "a".into(), to: "b".into(), cosine: 1.0 }];
        let mut m2 = TreeMapping::empty(1);
        m2.to_time = 2;
        m2.doc_pairs = vec![
            DocPair { from: "b".into(), to: "c".into(), cosine: 1.0 },
            DocPair { from: "x".into(), to: "y".into(), cosine: 1.0 },
        ];
        let al = compose_alignment(&[&m1, &m2]);
        assert_eq!(al.into_iter().collect::<Vec<_>>(), vec![("a".to_string(), "c".to_string())]);
    }

    #[test]
    fn nmi_on_cuts_needs_alignment() {
        let spec: &[(&str, Option<&str>, &[&str])] =
            &[("r", None, &["a", "b"]), ("A", Some("r"), &["a"]), ("B", Some("r"), &["b"])];
        let (t, _) = tree_from_spec(0, spec, 2);
        let cut = make_cut(&t, &ids(&["A", "B"])).unwrap();
        let none = BTreeSet::new();
        assert!(matches!(smoothness_nmi(&t, &cut, &t, &cut, &none), Err(Error::EmptyAlignment)));
        let al: BTreeSet<(String, String)> = [("a".into(), "a".into()), ("b".into(), "b".into())].into();
        let r = smoothness_nmi(&t, &cut, &t, &cut, &al).unwrap();
        assert_eq!(r.nmi, 1.0);
        assert_eq!(r.correspondence, vec![("A".into(), "A".into()), ("B".into(), "B".into())]);
    }

    #[test]
    fn map_and_fitness_identities() {
        let spec: &[(&str, Option<&str>, &[&str])] =
            &[("r", None, &["a", "b"]), ("A", Some("r"), &["a"]), ("B", Some("r"), &["b"])];
        let (t, store) = tree_from_spec(0, spec, 2);
        let leaf = make_cut(&t, &ids(&["A", "B"])).unwrap();
        let root = make_cut(&t, &ids(&["r"])).unwrap();
        let mut m = TreeMapping::identity(&t, &t);
        assert_eq!(smoothness_map(&leaf, &leaf, &m), 0.0);
        m.topic_pairs = vec![TopicPair { from: "r".into(), to: "r".into(), weight: 0.8 }];
        assert!((smoothness_map(&root, &leaf, &m) + 0.8).abs() < 1e-15);
        m.topic_pairs.clear();
        assert_eq!(smoothness_map(&root, &leaf, &m), 0.0);

        let dcm = DcmParams::symmetric(2, 0.5).unwrap();
        let foci = FocusSet::new(vec![Focus { node: NodeRef { time_index: 0, node_id: "A".into() }, doc_ids: ids(&["a"]) }]).unwrap();
        let p1 = CutParams::default();
        let p2 = CutParams { lambda: 7.0, ..Default::default() };
        for cut in [&leaf, &root] {
            let f1 = fitness(&t, cut, &foci, &store, &dcm, &p1).unwrap();
            let f2 = fitness(&t, cut, &foci, &store, &dcm, &p2).unwrap();
            assert_eq!(f1, f2);
            let e1 = treecut::energy_e1(&t, cut, &p1).unwrap();
            let ll = treecut::cut_log_likelihood(&t, cut, &foci, &store, &dcm).unwrap();
            assert!((f1 - (-e1 + ll)).abs() < 1e-12);
        }
    }

    /// r → {A → {A1, A2}, B → {B1 → {B1a, B1b}}}.
    fn deep() -> (TopicTree, DocumentStore) {
        tree_from_spec(
            0,
            &[
                ("r", None, &["a1", "a2", "b1", "b2"]),
                ("A", Some("r"), &["a1", "a2"]),
                ("A1", Some("A"), &["a1"]),
                ("A2", Some("A"), &["a2"]),
                ("B", Some("r"), &["b1", "b2"]),
                ("B1", Some("B"), &["b1", "b2"]),
                ("B1a", Some("B1"), &["b1"]),
                ("B1b", Some("B1"), &["b2"]),
            ],
            4,
        )
    }

    #[test]
    fn dist_cases() {
        let (t, _) = deep();
        let id = TreeMapping::identity(&t, &t);
        let cut = make_cut(&t, &ids(&["A1", "A2", "B1"])).unwrap();
        assert_eq!(smoothness_dist(&cut, &cut, &t, &t, &[&id]).unwrap(), 0.0);
        let root = make_cut(&t, &ids(&["r"])).unwrap();
        assert_eq!(smoothness_dist(&root, &root, &t, &t, &[&id]).unwrap(), 0.0);

        // Cut {A, B} at t (distance 2) against {A1, B1} at k (distance 4):
        // both directions contribute (2 − 4)².
        let cut_t = make_cut(&t, &ids(&["A", "B"])).unwrap();
        let spec_k: &[(&str, Option<&str>, &[&str])] = &[
            ("r", None, &["a1", "a2", "b1", "b2"]),
            ("A", Some("r"), &["a1", "a2"]),
            ("A1", Some("A"), &["a1", "a2"]),
            ("B", Some("r"), &["b1", "b2"]),
            ("B1", Some("B"), &["b1", "b2"]),
        ];
        let (k, _) = tree_from_spec(0, spec_k, 4);
        let mut m = TreeMapping::empty(0);
        m.to_time = 0;
        m.topic_pairs = vec![
            TopicPair { from: "A1".into(), to: "A".into(), weight: 1.0 },
            TopicPair { from: "B1".into(), to: "B".into(), weight: 1.0 },
        ];
        let cut_k = make_cut(&k, &ids(&["A1", "B1"])).unwrap();
        assert_eq!(k.path_distance(k.index_of("A1").unwrap(), k.index_of("B1").unwrap()), 4);
        assert_eq!(smoothness_dist(&cut_t, &cut_k, &t, &k, &[&m]).unwrap(), -4.0);
    }

    #[test]
    fn doi_cases() {
        let spec: &[(&str, Option<&str>, &[&str])] =
            &[("r", None, &["a", "b"]), ("A", Some("r"), &["a"]), ("B", Some("r"), &["b"])];
        let (t, store) = tree_from_spec(0, spec, 2);
        let focus = vec![store.centroid(&["a".to_string()]).unwrap()];
        let cp = CutParams::default();
        let small = DoiParams { tree_decay: 0.1, budget_lambda: 0.0, ..Default::default() };
        let (cut, doi) = doi_baseline_cut(&t, None, &focus, &small, &cp).unwrap();
        assert!(cut.contains("A"));
        let half = 0.5f64.sqrt();
        assert!((doi["A"] - 1.0).abs() < 1e-12);
        assert!((doi["r"] - half).abs() < 1e-12);
        assert!((doi["B"] - 0.1 * half).abs() < 1e-12);
        let heavy = DoiParams { budget_lambda: 100.0, ..Default::default() };
        assert_eq!(doi_baseline_cut(&t, None, &focus, &heavy, &cp).unwrap().0.cut_nodes, ids(&["r"]));
        // Uniform interest with no budget favours the larger cut.
        let (d, _) = deep();
        let id = TreeMapping::identity(&d, &d);
        let flat: DoiValues = d.nodes().iter().map(|n| (n.id.clone(), 1.0)).collect();
        let zero = DoiParams { time_decay: 1.0, budget_lambda: 0.0, ..Default::default() };
        let (cut, _) = doi_baseline_cut(&d, Some((&flat, &id)), &[], &zero, &cp).unwrap();
        assert_eq!(cut.cut_nodes, ids(&["A1", "A2", "B1a", "B1b"]));
    }

    #[test]
    fn report_csv_schema() {
        let (t, store) = deep();
        let id = TreeMapping::identity(&t, &t);
        let doc_pairs = ["a1", "a2", "b1", "b2"].iter().map(|d| DocPair { from: d.to_string(), to: d.to_string(), cosine: 1.0 }).collect();
        let m = TreeMapping { from_time: 0, to_time: 0, doc_pairs, ..id };
        let cut = make_cut(&t, &ids(&["A", "B"])).unwrap();
        let foci = FocusSet::new(vec![Focus { node: NodeRef { time_index: 0, node_id: "A".into() }, doc_ids: ids(&["a1"]) }]).unwrap();
        let dcm = DcmParams::symmetric(4, 0.01).unwrap();
        let trees = vec![t.clone(), t.clone()];
        let report = evaluate(&trees, &[cut.clone(), cut], &[m], &foci, &store, &dcm, &CutParams::default()).unwrap();
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,F,S_map,S_NMI@1,S_NMI@2,S_NMI@3,S_dist@1,S_dist@2,S_dist@3");
        let row0: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row0[2..], ["", "", "", "", "", "", ""]);
        let row1: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row1[2], "0.0");
        assert_eq!(row1[3], "1.0");
        assert_eq!(row1[6], "0.0");
    }
}

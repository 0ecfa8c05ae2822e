//! Focus-driven streaming tree cuts: energies, likelihood, objective and
//! the exact and heuristic solvers.

mod search;
mod sim;
mod stream;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dcm::{log_sum_exp, DcmParams, Suff};
use crate::error::{Error, Result};
use crate::model::{count_cuts, label_vector, DocumentStore, FocusSet, TopicTree, TreeCut, TreeMapping};
use crate::vecmath;

pub use search::{Move, SearchOutcome, MIN_GAIN, TIE_TOL};
pub(crate) use search::{exact, multi_start, CutState, SearchObjective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutParams {
    pub lambda: f64,
    pub sim_floor: f64,
    pub max_enumeration: u64,
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for CutParams {
    fn default() -> Self {
        Self { lambda: 1.0, sim_floor: 1e-6, max_enumeration: 100_000, restarts: 5, rng_seed: 0 }
    }
}

impl CutParams {
    pub fn check(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::BadParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.sim_floor > 0.0 && self.sim_floor < 1.0) {
            return Err(Error::BadParams(format!("sim_floor must lie in (0, 1), got {}", self.sim_floor)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutScore {
    pub log_fit: f64,
    pub log_smooth: f64,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub total: f64,
}

impl CutScore {
    pub fn from_parts(log_fit: f64, log_smooth: f64, log_likelihood: f64, log_prior: f64) -> Self {
        // `+ 0.0` folds negative zeros so serialized scores stay stable.
        let [log_fit, log_smooth, log_likelihood, log_prior] = [log_fit, log_smooth, log_likelihood, log_prior].map(|x| x + 0.0);
        Self { log_fit, log_smooth, log_likelihood, log_prior, total: log_fit + log_smooth + log_likelihood + log_prior }
    }
}

/// Clamped cosine of unit vectors.
pub fn cosine(a: &[f64], b: &[f64], floor: f64) -> f64 {
    vecmath::dot(a, b).clamp(floor, 1.0)
}

fn labels_by_index(tree: &TopicTree, cut: &TreeCut) -> Result<Vec<u8>> {
    tree.nodes()
        .iter()
        .map(|n| cut.labels.get(&n.id).copied().ok_or_else(|| Error::InvalidCut(format!("no label for {}", n.id))))
        .collect()
}

/// Fitness energy: each node's smallest `−ln S` to another node with the same
/// label; nodes without such a peer contribute nothing.
pub fn energy_e1(tree: &TopicTree, cut: &TreeCut, params: &CutParams) -> Result<f64> {
    let labels = labels_by_index(tree, cut)?;
    let nodes = tree.nodes();
    let mut total = 0.0;
    for r in 0..nodes.len() {
        let best = (0..nodes.len())
            .filter(|&s| s != r && labels[s] == labels[r])
            .map(|s| -cosine(&nodes[r].centroid, &nodes[s].centroid, params.sim_floor).ln())
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
        total += best.unwrap_or(0.0);
    }
    Ok(total)
}

/// Smoothness energy: `Σ |l_r − l_s| · w` over topic pairs between the
/// previous and the current tree. Pairs naming unknown nodes are skipped.
/// Terms are summed in sorted order so the pair order cannot change the bits.
pub fn energy_e2(cut_t: &TreeCut, cut_prev: &TreeCut, mapping: &TreeMapping) -> f64 {
    let mut terms: Vec<f64> = mapping
        .topic_pairs
        .iter()
        .filter_map(|p| {
            let lt = cut_t.labels.get(&p.to)?;
            let lp = cut_prev.labels.get(&p.from)?;
            (lt != lp).then_some(p.weight)
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `log p(D_f | D_s)` on summed counts; a focus document inside `D_s` is seen twice.
pub fn focus_predictive(
    focus_docs: &BTreeSet<String>,
    node_docs: &BTreeSet<String>,
    store: &DocumentStore,
    dcm: &DcmParams,
) -> Result<f64> {
    let f = Suff::from_docs(focus_docs.iter().map(|d| store.require(d).map(|d| &d.vector)).collect::<Result<Vec<_>>>()?, dcm)?;
    let s = Suff::from_docs(node_docs.iter().map(|d| store.require(d).map(|d| &d.vector)).collect::<Result<Vec<_>>>()?, dcm)?;
    Ok(s.log_predictive(&f, dcm))
}

/// `Σ_i log Σ_{s∈C} ω_s p(D_fi | D_s)` with `ω_s = |D_s| / |D_a|`.
pub fn cut_log_likelihood(
    tree: &TopicTree,
    cut: &TreeCut,
    foci: &FocusSet,
    store: &DocumentStore,
    dcm: &DcmParams,
) -> Result<f64> {
    let total = tree.doc_total() as f64;
    let mut ll = 0.0;
    for focus in foci.foci() {
        let mut terms = Vec::with_capacity(cut.len());
        for id in &cut.cut_nodes {
            let node = tree.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
            let w = node.doc_ids.len() as f64 / total;
            terms.push(w.ln() + focus_predictive(&focus.doc_ids, &node.doc_ids, store, dcm)?);
        }
        ll += log_sum_exp(terms);
    }
    Ok(ll)
}

pub fn log_posterior(
    tree: &TopicTree,
    cut: &TreeCut,
    foci: &FocusSet,
    store: &DocumentStore,
    dcm: &DcmParams,
    params: &CutParams,
) -> Result<f64> {
    Ok(cut_log_likelihood(tree, cut, foci, store, dcm)? - params.lambda * cut.len() as f64)
}

/// Everything one streaming step needs.
#[derive(Clone, Copy)]
pub struct CutProblem<'a> {
    pub tree: &'a TopicTree,
    /// Previous cut and the mapping from its tree to `tree`; `None` at t = 0.
    pub prev: Option<(&'a TreeCut, &'a TreeMapping)>,
    pub foci: &'a FocusSet,
    pub store: &'a DocumentStore,
    pub dcm: &'a DcmParams,
    pub params: &'a CutParams,
}

impl CutProblem<'_> {
    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        if let Some((prev, mapping)) = self.prev {
            if mapping.from_time != prev.time_index || mapping.to_time != self.tree.time_index() {
                return Err(Error::BadParams(format!(
                    "mapping {} -> {} does not connect cut at {} to tree at {}",
                    mapping.from_time,
                    mapping.to_time,
                    prev.time_index,
                    self.tree.time_index()
                )));
            }
        }
        if self.dcm.dim() != self.tree.dim() {
            return Err(Error::BadParams(format!(
                "alpha has {} components but the vocabulary has {}",
                self.dcm.dim(),
                self.tree.dim()
            )));
        }
        Ok(())
    }

    pub fn objective(&self, cut: &TreeCut) -> Result<CutScore> {
        objective(self, cut)
    }
}

/// `−E1 − E2 + Σ_i log p(D_fi | φ) − λ|C|`, with no smoothness term at t = 0.
pub fn objective(problem: &CutProblem<'_>, cut: &TreeCut) -> Result<CutScore> {
    problem.check()?;
    let e1 = energy_e1(problem.tree, cut, problem.params)?;
    let e2 = match problem.prev {
        Some((prev, mapping)) => energy_e2(cut, prev, mapping),
        None => 0.0,
    };
    let ll = cut_log_likelihood(problem.tree, cut, problem.foci, problem.store, problem.dcm)?;
    Ok(CutScore::from_parts(-e1, -e2, ll, -problem.params.lambda * cut.len() as f64))
}

/// Scores the solver's cut from scratch, reusing the similarity index.
fn finish(problem: &CutProblem<'_>, prepared: &stream::Prepared<'_>, cut: &[usize]) -> Result<(TreeCut, CutScore)> {
    let tc = TreeCut::from_indices(problem.tree, cut);
    let e1 = prepared.e1(&label_vector(problem.tree, cut));
    let e2 = match problem.prev {
        Some((prev, mapping)) => energy_e2(&tc, prev, mapping),
        None => 0.0,
    };
    let ll = cut_log_likelihood(problem.tree, &tc, problem.foci, problem.store, problem.dcm)?;
    let score = CutScore::from_parts(-e1, -e2, ll, -problem.params.lambda * cut.len() as f64);
    Ok((tc, score))
}

/// Exhaustive argmax; ties go to fewer nodes, then the smallest sorted id list.
pub fn solve_exact(problem: &CutProblem<'_>) -> Result<(TreeCut, CutScore)> {
    let prepared = stream::Prepared::new(problem)?;
    let (cut, _) = exact(problem.tree, &prepared, u128::from(problem.params.max_enumeration))?;
    finish(problem, &prepared, &cut)
}

/// Result of the local search, with per-start traces.
#[derive(Clone, Debug)]
pub struct HeuristicOutcome {
    pub cut: TreeCut,
    pub score: CutScore,
    pub search: SearchOutcome,
}

/// EXPAND/COLLAPSE steepest ascent from the projected previous cut plus
/// seeded random restarts, regardless of tree size.
pub fn solve_heuristic(problem: &CutProblem<'_>) -> Result<HeuristicOutcome> {
    let prepared = stream::Prepared::new(problem)?;
    let start = match problem.prev {
        Some((prev, mapping)) => project_cut(prev, mapping, problem.tree).indices(problem.tree)?,
        None => vec![0],
    };
    let search = multi_start(problem.tree, &prepared, &start, problem.params.restarts, problem.params.rng_seed);
    let (cut, score) = finish(problem, &prepared, &search.cut)?;
    Ok(HeuristicOutcome { cut, score, search })
}

/// Exact when the tree has at most `max_enumeration` cuts, heuristic otherwise.
pub fn solve_stream(problem: &CutProblem<'_>) -> Result<(TreeCut, CutScore)> {
    if count_cuts(problem.tree) <= u128::from(problem.params.max_enumeration) {
        solve_exact(problem)
    } else {
        solve_heuristic(problem).map(|h| (h.cut, h.score))
    }
}

/// Warm start for the next step: each previous cut node marks its
/// highest-weight counterpart, then a root descent cuts at every node that is
/// marked, a leaf, or has no marked descendant.
pub fn project_cut(prev_cut: &TreeCut, mapping: &TreeMapping, tree: &TopicTree) -> TreeCut {
    let mut choice: BTreeMap<&str, (f64, &str)> = BTreeMap::new();
    for p in &mapping.topic_pairs {
        if !prev_cut.contains(&p.from) || tree.index_of(&p.to).is_none() {
            continue;
        }
        let e = choice.entry(p.from.as_str()).or_insert((p.weight, p.to.as_str()));
        if p.weight > e.0 || (p.weight == e.0 && p.to.as_str() < e.1) {
            *e = (p.weight, p.to.as_str());
        }
    }
    let mut marked = vec![false; tree.len()];
    for (_, to) in choice.values() {
        marked[tree.index_of(to).expect("filtered above")] = true;
    }
    let mut below = vec![false; tree.len()];
    for v in (0..tree.len()).rev() {
        below[v] = tree.children(v).iter().any(|&c| marked[c] || below[c]);
    }
    let mut cut = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        if marked[v] || tree.is_leaf(v) || !below[v] {
            cut.push(v);
        } else {
            stack.extend(tree.children(v).iter().rev());
        }
    }
    cut.sort_unstable();
    TreeCut::from_indices(tree, &cut)
}

/// Serialized cut: `{time_index, cut_nodes, score}` plus optional groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub time_index: usize,
    pub cut_nodes: Vec<String>,
    pub score: CutScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<crate::postprocess::GroupRecord>>,
}

impl CutRecord {
    pub fn new(cut: &TreeCut, score: CutScore) -> Self {
        Self { time_index: cut.time_index, cut_nodes: cut.cut_nodes.iter().cloned().collect(), score, groups: None }
    }

    pub fn with_groups(mut self, groups: &[crate::postprocess::DisplayGroup]) -> Self {
        self.groups = Some(groups.iter().map(Into::into).collect());
        self
    }
}

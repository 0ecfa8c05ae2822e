//! Precomputed streaming objective used by both search modes.

use super::search::{CutState, Move, SearchObjective};
use super::sim::{e1_scan, E1State, SimIndex};
use super::CutProblem;
use crate::dcm::{log_sum_exp, Suff};
use crate::error::Result;
use crate::model::TopicTree;

/// Per-node terms of the objective that do not depend on the cut.
pub(crate) struct Prepared<'a> {
    tree: &'a TopicTree,
    sims: SimIndex,
    /// `x[i][s] = ln ω_s + log p(D_fi | D_s)`.
    x: Vec<Vec<f64>>,
    /// Smoothness energy of node `v` under label `l`: `e2[l][v]`.
    e2: [Vec<f64>; 2],
    lambda: f64,
}

/// Per-focus log-sum-exp as `(shift, scaled sum)`.
#[derive(Clone, Copy, Debug)]
struct Lse {
    m: f64,
    s: f64,
}

impl Lse {
    fn value(self) -> f64 {
        if self.s > 0.0 {
            self.m + self.s.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn from_terms<I: IntoIterator<Item = f64>>(xs: I) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Self { m: 0.0, s: 0.0 };
        }
        Self { m, s: xs.iter().map(|x| (x - m).exp()).sum() }
    }

    /// Swaps terms in place; `None` when cancellation makes the result
    /// unreliable and a rebuild is needed.
    fn update(self, removed: impl Iterator<Item = f64>, added: &[f64]) -> Option<Self> {
        let m2 = added.iter().copied().fold(self.m, f64::max);
        let scale = if self.s > 0.0 { (self.m - m2).exp() } else { 0.0 };
        let kept = self.s * scale;
        let rem: f64 = removed.map(|x| (x - m2).exp()).sum();
        let add: f64 = added.iter().map(|x| (x - m2).exp()).sum();
        let s = kept - rem + add;
        if !(s > 1e-6 * (kept + add)) {
            return None;
        }
        Some(Self { m: m2, s })
    }
}

pub(crate) struct StreamState {
    e1: E1State,
    ll: Vec<Lse>,
    e2: f64,
    size: usize,
    scratch: Vec<super::sim::Change>,
    added: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(problem: &CutProblem<'a>) -> Result<Self> {
        problem.check()?;
        let tree = problem.tree;
        let n = tree.len();
        let sims = SimIndex::new(tree, problem.params.sim_floor);

        // Node sufficient statistics, leaves first.
        let mut suff: Vec<Suff> = vec![Suff::default(); n];
        for v in (0..n).rev() {
            if tree.is_leaf(v) {
                let docs = tree.node(v).doc_ids.iter().map(|d| problem.store.require(d).map(|d| &d.vector));
                let docs = docs.collect::<Result<Vec<_>>>()?;
                suff[v] = Suff::from_docs(docs, problem.dcm)?;
            } else {
                let mut s = Suff::default();
                for &c in tree.children(v) {
                    s.add(&suff[c]);
                }
                suff[v] = s;
            }
        }

        let total_docs = tree.doc_total() as f64;
        let log_omega: Vec<f64> = tree
            .nodes()
            .iter()
            .map(|node| (node.doc_ids.len() as f64 / total_docs).ln())
            .collect();
        let mut x = Vec::with_capacity(problem.foci.m());
        for focus in problem.foci.foci() {
            let vectors = focus.doc_ids.iter().map(|d| problem.store.require(d).map(|d| &d.vector));
            let f_all = Suff::from_docs(vectors.collect::<Result<Vec<_>>>()?, problem.dcm)?;
            let xi = (0..n).map(|v| log_omega[v] + suff[v].log_predictive(&f_all, problem.dcm)).collect();
            x.push(xi);
        }

        let mut e2 = [vec![0.0; n], vec![0.0; n]];
        if let Some((prev, mapping)) = problem.prev {
            for p in &mapping.topic_pairs {
                let (Some(v), Some(&lf)) = (tree.index_of(&p.to), prev.labels.get(&p.from)) else { continue };
                for l in 0..2u8 {
                    e2[l as usize][v] += f64::from(l.abs_diff(lf)) * p.weight;
                }
            }
        }
        Ok(Self { tree, sims, x, e2, lambda: problem.params.lambda })
    }

    pub fn e1(&self, labels: &[u8]) -> f64 {
        e1_scan(&self.sims, labels)
    }

    pub fn e2(&self, labels: &[u8]) -> f64 {
        labels.iter().enumerate().map(|(v, &l)| self.e2[l as usize][v]).sum()
    }

    pub fn likelihood(&self, cut: &[usize]) -> f64 {
        self.x.iter().map(|xi| log_sum_exp(cut.iter().map(|&s| xi[s]))).sum()
    }

    fn swap_sets(&self, mv: Move) -> (Vec<usize>, Vec<usize>) {
        match mv {
            Move::Expand(v) => (vec![v], self.tree.children(v).to_vec()),
            Move::Collapse(p) => (self.tree.children(p).to_vec(), vec![p]),
        }
    }
}

impl SearchObjective for Prepared<'_> {
    type State = StreamState;

    fn init(&self, cut: &CutState) -> StreamState {
        let members = cut.cut.items();
        StreamState {
            e1: E1State::new(&self.sims, &cut.labels),
            ll: self.x.iter().map(|xi| Lse::from_terms(members.iter().map(|&s| xi[s]))).collect(),
            e2: self.e2(&cut.labels),
            size: cut.len(),
            scratch: Vec::new(),
            added: Vec::new(),
        }
    }

    fn delta(&self, st: &mut StreamState, cut: &CutState, mv: Move) -> f64 {
        let v = mv.pivot();
        let d_e1 = st.e1.flip_delta(&self.sims, v, &mut st.scratch);
        let from = cut.labels[v] as usize;
        let d_e2 = self.e2[1 - from][v] - self.e2[from][v];
        let (removed, added) = self.swap_sets(mv);
        let d_size = added.len() as f64 - removed.len() as f64;
        let mut d_ll = 0.0;
        for (i, xi) in self.x.iter().enumerate() {
            let old = st.ll[i];
            st.added.clear();
            st.added.extend(added.iter().map(|&s| xi[s]));
            let new = match old.update(removed.iter().map(|&s| xi[s]), &st.added) {
                Some(l) => l,
                None => Lse::from_terms(
                    cut.cut.items().iter().filter(|s| !removed.contains(s)).chain(&added).map(|&s| xi[s]),
                ),
            };
            d_ll += new.value() - old.value();
        }
        -d_e1 - d_e2 + d_ll - self.lambda * d_size
    }

    fn apply(&self, st: &mut StreamState, cut: &CutState, mv: Move) {
        let v = mv.pivot();
        st.e1.flip(&self.sims, v, &mut st.scratch);
        let from = cut.labels[v] as usize;
        st.e2 += self.e2[1 - from][v] - self.e2[from][v];
        let (removed, added) = self.swap_sets(mv);
        for (i, xi) in self.x.iter().enumerate() {
            let add: Vec<f64> = added.iter().map(|&s| xi[s]).collect();
            st.ll[i] = st.ll[i].update(removed.iter().map(|&s| xi[s]), &add).unwrap_or_else(|| {
                Lse::from_terms(
                    cut.cut.items().iter().filter(|s| !removed.contains(s)).chain(&added).map(|&s| xi[s]),
                )
            });
        }
        st.size = st.size + added.len() - removed.len();
    }

    fn total(&self, st: &StreamState) -> f64 {
        let ll: f64 = st.ll.iter().map(|l| l.value()).sum();
        -st.e1.total() - st.e2 + ll - self.lambda * st.size as f64
    }

    fn score(&self, cut: &[usize], labels: &[u8]) -> f64 {
        -self.e1(labels) - self.e2(labels) + self.likelihood(cut) - self.lambda * cut.len() as f64
    }
}

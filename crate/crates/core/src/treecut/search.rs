//! Objective-agnostic cut search: exhaustive enumeration and seeded
//! EXPAND/COLLAPSE steepest ascent with restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sim::IdxSet;
use crate::error::Result;
use crate::model::{enumerate_cut_indices, label_vector, TopicTree};

/// Totals within this distance are ties.
pub const TIE_TOL: f64 = 1e-9;
/// Minimum improvement for an accepted move.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Move {
    /// Replace a cut node by its children.
    Expand(usize),
    /// Replace a complete sibling group by its parent.
    Collapse(usize),
}

impl Move {
    /// The node whose label flips.
    pub fn pivot(self) -> usize {
        match self {
            Move::Expand(v) | Move::Collapse(v) => v,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct CutState {
    pub in_cut: Vec<bool>,
    pub cut: IdxSet,
    pub labels: Vec<u8>,
}

impl CutState {
    pub fn new(tree: &TopicTree, cut: &[usize]) -> Self {
        let mut in_cut = vec![false; tree.len()];
        let mut set = IdxSet::new(tree.len());
        for &c in cut {
            in_cut[c] = true;
            set.insert(c);
        }
        Self { in_cut, cut: set, labels: label_vector(tree, cut) }
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.cut.items().to_vec();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.cut.len()
    }

    /// Available moves in ascending order.
    pub fn moves(&self, tree: &TopicTree) -> Vec<Move> {
        let mut out = Vec::with_capacity(2 * self.len());
        for &v in self.cut.items() {
            if !tree.is_leaf(v) {
                out.push(Move::Expand(v));
            }
            if let Some(p) = tree.parent(v) {
                let kids = tree.children(p);
                if kids[0] == v && kids.iter().all(|&c| self.in_cut[c]) {
                    out.push(Move::Collapse(p));
                }
            }
        }
        out.sort_unstable_by_key(|m| (m.pivot(), matches!(m, Move::Collapse(_))));
        out
    }

    pub fn apply(&mut self, tree: &TopicTree, mv: Move) {
        match mv {
            Move::Expand(v) => {
                self.in_cut[v] = false;
                self.cut.remove(v);
                self.labels[v] = 1;
                for &c in tree.children(v) {
                    self.in_cut[c] = true;
                    self.cut.insert(c);
                }
            }
            Move::Collapse(p) => {
                for &c in tree.children(p) {
                    self.in_cut[c] = false;
                    self.cut.remove(c);
                }
                self.in_cut[p] = true;
                self.cut.insert(p);
                self.labels[p] = 0;
            }
        }
    }
}

/// A cut objective supporting single-move deltas.
pub(crate) trait SearchObjective {
    type State;

    fn init(&self, cut: &CutState) -> Self::State;
    /// Change of the total if `mv` were applied; `state` is only used as
    /// scratch space.
    fn delta(&self, state: &mut Self::State, cut: &CutState, mv: Move) -> f64;
    /// Updates `state` for `mv`; called before `cut` itself changes.
    fn apply(&self, state: &mut Self::State, cut: &CutState, mv: Move);
    fn total(&self, state: &Self::State) -> f64;
    /// Total of a cut computed from scratch.
    fn score(&self, cut: &[usize], labels: &[u8]) -> f64;
}

/// `true` when `(a, cut_a)` beats `(b, cut_b)`: higher total, then fewer
/// nodes, then the lexicographically smaller sorted id list.
pub(crate) fn better(tree: &TopicTree, a: f64, cut_a: &[usize], b: f64, cut_b: &[usize]) -> bool {
    if a > b + TIE_TOL {
        return true;
    }
    if a < b - TIE_TOL {
        return false;
    }
    if cut_a.len() != cut_b.len() {
        return cut_a.len() < cut_b.len();
    }
    let ids = |c: &[usize]| {
        let mut v: Vec<&str> = c.iter().map(|&i| tree.node(i).id.as_str()).collect();
        v.sort_unstable();
        v
    };
    ids(cut_a) < ids(cut_b)
}

pub(crate) fn exact<O: SearchObjective>(tree: &TopicTree, obj: &O, limit: u128) -> Result<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for cut in enumerate_cut_indices(tree, limit)? {
        let labels = label_vector(tree, &cut);
        let total = obj.score(&cut, &labels);
        let replace = match &best {
            None => true,
            Some((bc, bt)) => better(tree, total, &cut, *bt, bc),
        };
        if replace {
            best = Some((cut, total));
        }
    }
    Ok(best.expect("every tree has at least one cut"))
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub cut: Vec<usize>,
    pub total: f64,
    /// Running totals per start: the start value, then one per accepted move.
    pub traces: Vec<Vec<f64>>,
}

/// Steepest ascent from `start` until no move gains more than `MIN_GAIN`.
pub(crate) fn climb<O: SearchObjective>(tree: &TopicTree, obj: &O, start: &[usize]) -> (Vec<usize>, f64, Vec<f64>) {
    let mut cut = CutState::new(tree, start);
    let mut st = obj.init(&cut);
    let mut trace = vec![obj.total(&st)];
    loop {
        let mut best: Option<(f64, Move)> = None;
        for mv in cut.moves(tree) {
            let d = obj.delta(&mut st, &cut, mv);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, mv));
            }
        }
        match best {
            Some((d, mv)) if d > MIN_GAIN => {
                obj.apply(&mut st, &cut, mv);
                cut.apply(tree, mv);
                trace.push(obj.total(&st));
            }
            _ => break,
        }
    }
    let total = obj.total(&st);
    (cut.sorted(), total, trace)
}

/// A random cut reached from `{root}` by random EXPAND moves.
pub(crate) fn random_cut<R: Rng>(tree: &TopicTree, rng: &mut R) -> Vec<usize> {
    let internal = tree.internal_count();
    if internal == 0 {
        return vec![0];
    }
    let steps = rng.gen_range(1..=internal);
    let mut cut = CutState::new(tree, &[0]);
    for _ in 0..steps {
        let mut expandable: Vec<usize> = cut.cut.items().iter().copied().filter(|&v| !tree.is_leaf(v)).collect();
        if expandable.is_empty() {
            break;
        }
        expandable.sort_unstable();
        let v = expandable[rng.gen_range(0..expandable.len())];
        cut.apply(tree, Move::Expand(v));
    }
    cut.sorted()
}

/// Climbs from `start` and from `restarts` seeded random cuts; returns the
/// best local optimum.
pub(crate) fn multi_start<O: SearchObjective>(
    tree: &TopicTree,
    obj: &O,
    start: &[usize],
    restarts: usize,
    seed: u64,
) -> SearchOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut best_cut, mut best_total, first) = climb(tree, obj, start);
    let mut traces = vec![first];
    for _ in 0..restarts {
        let s = random_cut(tree, &mut rng);
        let (c, t, trace) = climb(tree, obj, &s);
        traces.push(trace);
        if better(tree, t, &c, best_total, &best_cut) {
            best_cut = c;
            best_total = t;
        }
    }
    SearchOutcome { cut: best_cut, total: best_total, traces }
}

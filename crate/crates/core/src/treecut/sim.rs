//! Nearest-neighbour similarity index over node centroids and the
//! incremental fitness-energy state built on it.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::TopicTree;

/// Above this node count only the `SPARSE_K` nearest neighbours are kept.
const DENSE_LIMIT: usize = 512;
const SPARSE_K: usize = 64;
/// Classes this small are scanned directly.
const SMALL_CLASS: usize = 16;

/// Insertion-ordered index set with O(1) insert/remove.
#[derive(Clone, Debug)]
pub(crate) struct IdxSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl IdxSet {
    pub fn new(universe: usize) -> Self {
        Self { items: Vec::new(), pos: vec![usize::MAX; universe] }
    }

    pub fn insert(&mut self, x: usize) {
        if self.pos[x] == usize::MAX {
            self.pos[x] = self.items.len();
            self.items.push(x);
        }
    }

    pub fn remove(&mut self, x: usize) {
        let p = self.pos[x];
        if p == usize::MAX {
            return;
        }
        let last = *self.items.last().expect("nonempty");
        self.items.swap_remove(p);
        if last != x {
            self.pos[last] = p;
        }
        self.pos[x] = usize::MAX;
    }

    pub fn contains(&self, x: usize) -> bool {
        self.pos[x] != usize::MAX
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }
}

#[derive(Clone, Debug)]
struct Lists {
    /// Nearest neighbours by `(distance, index)`.
    neighbors: Vec<Vec<(f64, usize)>>,
    /// Nodes whose neighbour list contains this node, with the distance.
    reverse: Vec<Vec<(f64, usize)>>,
    /// Distance of the last kept neighbour, or infinity when the list is
    /// complete.
    kth: Vec<f64>,
}

/// `−ln clamp(cos, floor, 1)` distances with per-node sorted neighbour lists.
/// Sparse lists grow on demand, so every query is answered exactly.
#[derive(Clone, Debug)]
pub(crate) struct SimIndex {
    n: usize,
    dim: usize,
    flat: Vec<f64>,
    floor: f64,
    /// Full distance matrix for small trees.
    matrix: Vec<f64>,
    lists: RefCell<Lists>,
}

impl SimIndex {
    pub fn new(tree: &TopicTree, floor: f64) -> Self {
        let n = tree.len();
        let dim = tree.dim();
        let mut flat = Vec::with_capacity(n * dim);
        for node in tree.nodes() {
            flat.extend_from_slice(&node.centroid);
        }
        let empty = Lists { neighbors: Vec::new(), reverse: Vec::new(), kth: Vec::new() };
        let mut index = Self { n, dim, flat, floor, matrix: Vec::new(), lists: RefCell::new(empty) };
        let dense = n <= DENSE_LIMIT;
        let k = if dense { n.saturating_sub(1) } else { SPARSE_K };
        let mut matrix = if dense { vec![0.0; n * n] } else { Vec::new() };
        let complete = k + 1 >= n;
        let mut heaps: Vec<BinaryHeap<Entry>> = (0..n).map(|_| BinaryHeap::with_capacity(k + 1)).collect();
        for u in 0..n {
            for v in (u + 1)..n {
                let d = index.raw_dist(u, v);
                if dense {
                    matrix[u * n + v] = d;
                    matrix[v * n + u] = d;
                }
                push_bounded(&mut heaps[u], Entry(d, v), k);
                push_bounded(&mut heaps[v], Entry(d, u), k);
            }
        }
        let mut neighbors: Vec<Vec<(f64, usize)>> =
            heaps.into_iter().map(|h| h.into_vec().into_iter().map(|e| (e.0, e.1)).collect()).collect();
        let mut reverse = vec![Vec::new(); n];
        let mut kth = vec![f64::INFINITY; n];
        for (u, list) in neighbors.iter_mut().enumerate() {
            list.sort_by(entry_cmp);
            for &(d, v) in list.iter() {
                reverse[v].push((d, u));
            }
            if !complete {
                kth[u] = list.last().map_or(f64::INFINITY, |x| x.0);
            }
        }
        index.matrix = matrix;
        index.lists = RefCell::new(Lists { neighbors, reverse, kth });
        index
    }

    #[inline]
    pub fn dist(&self, u: usize, v: usize) -> f64 {
        if !self.matrix.is_empty() {
            return self.matrix[u * self.n + v];
        }
        self.raw_dist(u, v)
    }

    #[inline]
    fn raw_dist(&self, u: usize, v: usize) -> f64 {
        let a = &self.flat[u * self.dim..(u + 1) * self.dim];
        let b = &self.flat[v * self.dim..(v + 1) * self.dim];
        -crate::vecmath::dot(a, b).clamp(self.floor, 1.0).ln()
    }

    fn kth(&self, u: usize) -> f64 {
        self.lists.borrow().kth[u]
    }

    /// Nearest neighbour of `u` accepted by `ok`, extending the list of `u`
    /// until one is found or the list is complete.
    fn nearest(&self, u: usize, ok: impl Fn(usize) -> bool) -> Option<(f64, usize)> {
        loop {
            {
                let lists = self.lists.borrow();
                if let Some(&hit) = lists.neighbors[u].iter().find(|&&(_, w)| ok(w)) {
                    return Some(hit);
                }
                if lists.kth[u] == f64::INFINITY {
                    return None;
                }
            }
            self.extend(u);
        }
    }

    /// Doubles the neighbour list of `u`. The kept prefix is unchanged
    /// because the order is total.
    fn extend(&self, u: usize) {
        let mut lists = self.lists.borrow_mut();
        let cur = lists.neighbors[u].len();
        let target = (2 * cur).max(SPARSE_K).min(self.n - 1);
        let mut row: Vec<(f64, usize)> = (0..self.n).filter(|&w| w != u).map(|w| (self.raw_dist(u, w), w)).collect();
        if target < row.len() {
            row.select_nth_unstable_by(target - 1, entry_cmp);
            row.truncate(target);
        }
        row.sort_by(entry_cmp);
        for &(d, w) in &row[cur..] {
            lists.reverse[w].push((d, u));
        }
        lists.kth[u] = if target == self.n - 1 { f64::INFINITY } else { row[target - 1].0 };
        lists.neighbors[u] = row;
    }
}

fn entry_cmp(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        entry_cmp(&(self.0, self.1), &(other.0, other.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `k` smallest entries in a max-heap.
fn push_bounded(heap: &mut BinaryHeap<Entry>, item: Entry, k: usize) {
    if heap.len() < k {
        heap.push(item);
    } else if let Some(mut top) = heap.peek_mut() {
        if item < *top {
            *top = item;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Best {
    d: f64,
    partner: usize,
    /// `true` when no node outside the neighbour list can beat `d`.
    covered: bool,
}

/// Fitness energy under a labelling, maintained across single-label flips.
#[derive(Clone, Debug)]
pub(crate) struct E1State {
    labels: Vec<u8>,
    best: Vec<Option<Best>>,
    members: [IdxSet; 2],
    uncovered: [IdxSet; 2],
    dependents: Vec<Vec<usize>>,
    total: f64,
}

/// One node's replacement best partner.
pub(crate) type Change = (usize, Option<Best>);

impl E1State {
    pub fn new(index: &SimIndex, labels: &[u8]) -> Self {
        let n = labels.len();
        let mut members = [IdxSet::new(n), IdxSet::new(n)];
        for (v, &l) in labels.iter().enumerate() {
            members[l as usize].insert(v);
        }
        let mut st = Self {
            labels: labels.to_vec(),
            best: vec![None; n],
            members,
            uncovered: [IdxSet::new(n), IdxSet::new(n)],
            dependents: vec![Vec::new(); n],
            total: 0.0,
        };
        for u in 0..n {
            let b = st.search(index, u, labels[u], None);
            st.set_best(u, b);
        }
        st.total = st.best.iter().map(|b| b.map_or(0.0, |b| b.d)).sum();
        st
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Best same-label partner of `u` among nodes labelled `label`, skipping
    /// `exclude`.
    fn search(&self, index: &SimIndex, u: usize, label: u8, exclude: Option<usize>) -> Option<Best> {
        let ok = |w: usize| w != u && Some(w) != exclude && self.labels[w] == label;
        let members = &self.members[label as usize];
        if members.len() <= SMALL_CLASS {
            let mut best: Option<Best> = None;
            for &w in members.items() {
                if !ok(w) {
                    continue;
                }
                let d = index.dist(u, w);
                if best.map_or(true, |b| entry_cmp(&(d, w), &(b.d, b.partner)).is_lt()) {
                    best = Some(Best { d, partner: w, covered: d <= index.kth(u) });
                }
            }
            return best;
        }
        index.nearest(u, ok).map(|(d, w)| Best { d, partner: w, covered: true })
    }

    fn set_best(&mut self, u: usize, b: Option<Best>) {
        if let Some(old) = self.best[u] {
            let deps = &mut self.dependents[old.partner];
            if let Some(p) = deps.iter().position(|&x| x == u) {
                deps.swap_remove(p);
            }
        }
        let l = self.labels[u] as usize;
        match b {
            Some(nb) => {
                self.dependents[nb.partner].push(u);
                if nb.covered {
                    self.uncovered[l].remove(u);
                } else {
                    self.uncovered[l].insert(u);
                }
            }
            None => self.uncovered[l].insert(u),
        }
        self.best[u] = b;
    }

    fn contribution(b: &Option<Best>) -> f64 {
        b.map_or(0.0, |b| b.d)
    }

    /// Changes induced by flipping the label of `v`, with the energy delta.
    fn plan(&self, index: &SimIndex, v: usize, out: &mut Vec<Change>) -> f64 {
        out.clear();
        let a = self.labels[v];
        let b = 1 - a;
        let mut delta = 0.0;

        // v itself joins class b.
        let nv = self.search(index, v, b, None);
        delta += Self::contribution(&nv) - Self::contribution(&self.best[v]);
        out.push((v, nv));

        // Class b members may now pair with v.
        let class_b = &self.members[b as usize];
        let consider = |u: usize, d: f64, out: &mut Vec<Change>, delta: &mut f64| {
            let improves = match self.best[u] {
                None => true,
                Some(cur) => d < cur.d,
            };
            if improves {
                let old = Self::contribution(&self.best[u]);
                *delta += d - old;
                out.push((u, Some(Best { d, partner: v, covered: d <= index.kth(u) })));
            }
        };
        let lists = index.lists.borrow();
        let rev = &lists.reverse[v];
        let uncovered = &self.uncovered[b as usize];
        // Reverse entries carry their distance, so they are cheaper to visit
        // than class members unless distances are tabulated.
        let rev_cost = if index.matrix.is_empty() { 0 } else { rev.len() };
        if class_b.len() <= rev_cost + uncovered.len() {
            for &u in class_b.items() {
                consider(u, index.dist(u, v), out, &mut delta);
            }
        } else {
            for &(d, u) in rev {
                if self.labels[u] == b && !uncovered.contains(u) {
                    consider(u, d, out, &mut delta);
                }
            }
            for &u in uncovered.items() {
                consider(u, index.dist(u, v), out, &mut delta);
            }
        }

        drop(lists);

        // Class a members that paired with v need a new partner.
        for &u in &self.dependents[v] {
            if self.labels[u] != a {
                continue;
            }
            let nb = self.search(index, u, a, Some(v));
            delta += Self::contribution(&nb) - Self::contribution(&self.best[u]);
            out.push((u, nb));
        }
        delta
    }

    pub fn flip_delta(&self, index: &SimIndex, v: usize, scratch: &mut Vec<Change>) -> f64 {
        self.plan(index, v, scratch)
    }

    pub fn flip(&mut self, index: &SimIndex, v: usize, scratch: &mut Vec<Change>) {
        let delta = self.plan(index, v, scratch);
        let a = self.labels[v] as usize;
        let b = 1 - a;
        self.members[a].remove(v);
        self.uncovered[a].remove(v);
        self.members[b].insert(v);
        self.labels[v] = b as u8;
        for &(u, nb) in scratch.iter() {
            self.set_best(u, nb);
        }
        self.total += delta;
    }

    #[cfg(test)]
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Fitness energy computed from scratch via the neighbour lists.
pub(crate) fn e1_scan(index: &SimIndex, labels: &[u8]) -> f64 {
    (0..labels.len()).filter_map(|r| index.nearest(r, |s| labels[s] == labels[r]).map(|(d, _)| d)).sum()
}

/// Brute-force fitness energy over all node pairs.
#[cfg(test)]
pub(crate) fn e1_bruteforce(index: &SimIndex, labels: &[u8]) -> f64 {
    let n = labels.len();
    (0..n)
        .map(|r| {
            (0..n)
                .filter(|&s| s != r && labels[s] == labels[r])
                .map(|s| index.dist(r, s))
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
                .unwrap_or(0.0)
        })
        .sum()
}

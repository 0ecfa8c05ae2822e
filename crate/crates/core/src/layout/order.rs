//! Crossing reduction with barycenter sweeps that keep siblings and
//! display groups contiguous.

use std::collections::{BTreeMap, BTreeSet};

use super::{Link, LayoutStep};
use crate::model::TopicTree;

/// Cut nodes in preorder with children visited in id order.
pub fn base_order(step: &LayoutStep<'_>) -> Vec<String> {
    let tree = step.tree;
    let mut out = Vec::with_capacity(step.cut.len());
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        let id = &tree.node(v).id;
        if step.cut.contains(id) {
            out.push(id.clone());
            continue;
        }
        let mut kids: Vec<usize> = tree.children(v).to_vec();
        kids.sort_by(|a, b| tree.node(*b).id.cmp(&tree.node(*a).id));
        stack.extend(kids);
    }
    out
}

/// Pairs of links whose endpoints appear in opposite orders.
pub fn crossings(left: &[String], right: &[String], links: &[Link]) -> usize {
    let pl: BTreeMap<&str, usize> = left.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let pr: BTreeMap<&str, usize> = right.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ends: Vec<(usize, usize)> =
        links.iter().filter_map(|l| Some((*pl.get(l.from.as_str())?, *pr.get(l.to.as_str())?))).collect();
    let mut n = 0;
    for i in 0..ends.len() {
        for j in i + 1..ends.len() {
            let (a, b) = (ends[i], ends[j]);
            if (a.0 as i64 - b.0 as i64) * (a.1 as i64 - b.1 as i64) < 0 {
                n += 1;
            }
        }
    }
    n
}

fn total_crossings(orders: &[Vec<String>], links: &[Vec<Link>]) -> usize {
    links.iter().enumerate().map(|(t, l)| crossings(&orders[t], &orders[t + 1], l)).sum()
}

/// Reorders one step against the fixed order of a neighbouring step.
/// `forward` means the neighbour is the previous step.
fn reorder(step: &LayoutStep<'_>, current: &[String], neighbour: &[String], links: &[Link], forward: bool) -> Vec<String> {
    let tree: &TopicTree = step.tree;
    let npos: BTreeMap<&str, f64> = neighbour.iter().enumerate().map(|(i, s)| (s.as_str(), i as f64)).collect();
    let cpos: BTreeMap<&str, f64> = current.iter().enumerate().map(|(i, s)| (s.as_str(), i as f64)).collect();

    // Per cut node: (Σ w·pos, Σ w) over links to the neighbour.
    let mut pull: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for l in links {
        let (mine, theirs) = if forward { (&l.to, &l.from) } else { (&l.from, &l.to) };
        if let Some(&p) = npos.get(theirs.as_str()) {
            let w = l.from_docs.len() as f64;
            let e = pull.entry(mine.as_str()).or_default();
            e.0 += w * p;
            e.1 += w;
        }
    }

    // Aggregate per tree node: (Σ w·pos, Σ w, Σ current pos, cut count).
    let n = tree.len();
    let mut agg = vec![(0.0, 0.0, 0.0, 0usize); n];
    let in_cut: Vec<bool> = tree.nodes().iter().map(|nd| step.cut.contains(&nd.id)).collect();
    let mut below_cut = vec![false; n];
    for v in 0..n {
        if let Some(p) = tree.parent(v) {
            below_cut[v] = below_cut[p] || in_cut[p];
        }
    }
    for v in (0..n).rev() {
        if below_cut[v] {
            continue;
        }
        if in_cut[v] {
            let id = tree.node(v).id.as_str();
            let (s, w) = pull.get(id).copied().unwrap_or_default();
            agg[v] = (s, w, cpos.get(id).copied().unwrap_or(v as f64), 1);
        }
        if let Some(p) = tree.parent(v) {
            let a = agg[v];
            let b = &mut agg[p];
            b.0 += a.0;
            b.1 += a.1;
            b.2 += a.2;
            b.3 += a.3;
        }
    }
    let key_of = |a: (f64, f64, f64, usize)| if a.1 > 0.0 { a.0 / a.1 } else { a.2 / a.3.max(1) as f64 };

    let group_of: BTreeMap<&str, &str> =
        step.groups.iter().flat_map(|g| g.member_cut_nodes.iter().map(move |m| (m.as_str(), g.id.as_str()))).collect();

    let mut out = Vec::with_capacity(current.len());
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        if in_cut[v] {
            out.push(tree.node(v).id.clone());
            continue;
        }
        let kids = tree.children(v);
        let mut gagg: BTreeMap<&str, (f64, f64, f64, usize)> = BTreeMap::new();
        for &c in kids {
            let id = tree.node(c).id.as_str();
            let g = group_of.get(id).copied().unwrap_or(id);
            let e = gagg.entry(g).or_default();
            let a = agg[c];
            e.0 += a.0;
            e.1 += a.1;
            e.2 += a.2;
            e.3 += a.3;
        }
        let mut keyed: Vec<(f64, &str, f64, f64, &str, usize)> = kids
            .iter()
            .map(|&c| {
                let id = tree.node(c).id.as_str();
                let g = group_of.get(id).copied().unwrap_or(id);
                let a = agg[c];
                (key_of(gagg[g]), g, key_of(a), a.2 / a.3.max(1) as f64, id, c)
            })
            .collect();
        keyed.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(b.1))
                .then(a.2.total_cmp(&b.2))
                .then(a.3.total_cmp(&b.3))
                .then(a.4.cmp(b.4))
        });
        stack.extend(keyed.iter().rev().map(|k| k.5));
    }
    out
}

/// Per-step cut node orders after `sweeps` alternating barycenter passes.
/// The returned orders never have more crossings than the base orders.
pub fn order_nodes(steps: &[LayoutStep<'_>], links: &[Vec<Link>], sweeps: usize) -> Vec<Vec<String>> {
    let mut orders: Vec<Vec<String>> = steps.iter().map(base_order).collect();
    if steps.len() < 2 {
        return orders;
    }
    let mut best = orders.clone();
    let mut best_c = total_crossings(&orders, links);
    for s in 0..sweeps {
        if best_c == 0 {
            break;
        }
        if s % 2 == 0 {
            for t in 1..steps.len() {
                orders[t] = reorder(&steps[t], &orders[t], &orders[t - 1], &links[t - 1], true);
            }
        } else {
            for t in (0..steps.len() - 1).rev() {
                orders[t] = reorder(&steps[t], &orders[t], &orders[t + 1], &links[t], false);
            }
        }
        let c = total_crossings(&orders, links);
        if c < best_c {
            best_c = c;
            best = orders.clone();
        }
    }
    best
}

/// `true` when no two children of different parents interleave.
pub fn siblings_contiguous(tree: &TopicTree, order: &[String]) -> bool {
    let parents: Vec<Option<usize>> = order.iter().map(|id| tree.index_of(id).and_then(|i| tree.parent(i))).collect();
    let mut closed = BTreeSet::new();
    for i in 0..parents.len() {
        if i > 0 && parents[i] != parents[i - 1] {
            if closed.contains(&parents[i]) {
                return false;
            }
            closed.insert(parents[i - 1]);
        }
    }
    true
}
